//! Line-oriented run trace.
//!
//! One record per line in logfmt style:
//!
//! ```text
//! t=12.5 seq=41 node=3 cat=cluster ev=beacon counter=2 tenure=1
//! ```
//!
//! `t`, `seq`, `node`, `cat` and `ev` always come first and in that order;
//! the remaining fields keep the order they were written in. Values never
//! contain spaces. Times use Rust's shortest round-trip float formatting, so
//! parsing a trace gives back the exact simulated times.

use std::fmt::{self, Display, Write as _};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::NodeId;

/// Trace writer. Records are appended to an in-memory text buffer.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    text: String,
    seq: u64,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    /// Starts a record. Fields are added with [`Rec::f`]; the line ends when
    /// the builder is dropped.
    pub fn rec(&mut self, t: SimTime, node: Option<NodeId>, cat: &str, ev: &str) -> Rec<'_> {
        let seq = self.seq;
        self.seq += 1;
        let _ = write!(self.text, "t={} seq={} node=", t.secs(), seq);
        match node {
            Some(n) => {
                let _ = write!(self.text, "{n}");
            }
            None => self.text.push('-'),
        }
        let _ = write!(self.text, " cat={cat} ev={ev}");
        Rec { text: &mut self.text }
    }

    pub fn len(&self) -> u64 {
        self.seq
    }

    pub fn is_empty(&self) -> bool {
        self.seq == 0
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub struct Rec<'a> {
    text: &'a mut String,
}

impl Rec<'_> {
    pub fn f(self, key: &str, value: impl Display) -> Self {
        let _ = write!(self.text, " {key}={value}");
        self
    }
}

impl Drop for Rec<'_> {
    fn drop(&mut self) {
        self.text.push('\n');
    }
}

/// Comma-joined list, `-` when empty.
pub struct List<'a, T>(pub &'a [T]);

impl<T: Display> Display for List<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("-");
        }
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A parsed trace line.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub seq: u64,
    pub node: Option<NodeId>,
    pub cat: String,
    pub ev: String,
    pub fields: Vec<(String, String)>,
}

impl TraceRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.get(key)?.parse().ok()
    }

    pub fn node_field(&self, key: &str) -> Option<NodeId> {
        self.get(key)?.parse::<u32>().ok().map(NodeId)
    }

    /// Comma-separated node list; `-` is empty.
    pub fn nodes(&self, key: &str) -> Vec<NodeId> {
        match self.get(key) {
            None | Some("-") => Vec::new(),
            Some(s) => s.split(',').filter_map(|x| x.parse().ok()).map(NodeId).collect(),
        }
    }

    pub fn is(&self, cat: &str, ev: &str) -> bool {
        self.cat == cat && self.ev == ev
    }
}

fn parse_line(lineno: usize, line: &str) -> Result<TraceRecord> {
    let bad = |reason: &str| Error::TraceParse {
        line: lineno,
        reason: reason.to_string(),
    };
    let mut parts = line.split(' ');
    let mut head = |key: &str| -> Result<&str> {
        let p = parts.next().ok_or_else(|| bad(&format!("missing {key}")))?;
        p.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| bad(&format!("expected {key}=, got {p:?}")))
    };
    let time = head("t")?.parse::<f64>().map_err(|e| bad(&e.to_string()))?;
    let seq = head("seq")?.parse::<u64>().map_err(|e| bad(&e.to_string()))?;
    let node = match head("node")? {
        "-" => None,
        s => Some(NodeId(s.parse::<u32>().map_err(|e| bad(&e.to_string()))?)),
    };
    let cat = head("cat")?.to_string();
    let ev = head("ev")?.to_string();
    let mut fields = Vec::new();
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| bad(&format!("field without '=': {p:?}")))?;
        fields.push((k.to_string(), v.to_string()));
    }
    Ok(TraceRecord {
        time,
        seq,
        node,
        cat,
        ev,
        fields,
    })
}

/// Parses a whole trace, checking that records are ordered by `(t, seq)`.
pub fn parse(text: &str) -> Result<Vec<TraceRecord>> {
    let mut out: Vec<TraceRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let r = parse_line(i + 1, line)?;
        if let Some(prev) = out.last() {
            if r.time < prev.time || r.seq <= prev.seq {
                return Err(Error::TraceParse {
                    line: i + 1,
                    reason: "records out of (t, seq) order".into(),
                });
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Hex sha256 of the trace text.
pub fn hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_and_parse_back() {
        let mut tr = Trace::new();
        tr.rec(SimTime::from_secs(0.1 + 0.2), Some(NodeId(3)), "cluster", "beacon")
            .f("counter", 2)
            .f("members", List(&[NodeId(1), NodeId(4)]));
        tr.rec(SimTime::from_secs(1.0), None, "meta", "end");
        let recs = parse(tr.as_str()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].time, 0.1 + 0.2);
        assert_eq!(recs[0].node, Some(NodeId(3)));
        assert_eq!(recs[0].u64("counter"), Some(2));
        assert_eq!(recs[0].nodes("members"), vec![NodeId(1), NodeId(4)]);
        assert_eq!(recs[1].node, None);
        assert!(recs[1].is("meta", "end"));
    }

    #[test]
    fn out_of_order_rejected() {
        let text = "t=2 seq=0 node=- cat=a ev=b\nt=1 seq=1 node=- cat=a ev=b\n";
        assert!(parse(text).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
