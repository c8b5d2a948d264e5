//! Random-waypoint movement and the unit-disk neighbour relation.

use manet_ids::kernel::{RngStream, SimTime};
use manet_ids::net::{neighbors_in, Area, Mobility, MobilityModel};
use manet_ids::NodeId;

fn main() -> manet_ids::Result<()> {
    let area = Area {
        width: 500.0,
        height: 500.0,
    };
    let model = MobilityModel::RandomWaypoint {
        speed_min: 0.0,
        speed_max: 20.0,
        pause: 5.0,
    };
    let mut place = RngStream::derive(1, "placement");
    let initial = (0..6).map(|_| area.random_point(&mut place)).collect();
    let streams = (0..6).map(|i| RngStream::derive(1, &format!("mobility.{i}"))).collect();
    let mut m = Mobility::new(area, model, initial, streams);
    for t in [0.0, 10.0, 30.0, 60.0] {
        let pos = m.positions_at(SimTime::from_secs(t));
        let n0 = neighbors_in(&pos, NodeId(0), 250.0);
        println!(
            "t={t:>4}: node 0 at ({:.0}, {:.0}), neighbours {:?}",
            pos[0].x, pos[0].y, n0
        );
    }
    Ok(())
}
