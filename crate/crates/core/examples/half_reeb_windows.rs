//! Half-Reeb search over a few windows per registry field, with timings.
//! `cargo run --release -p horizon-core --example half_reeb_windows`

use horizon::field::registry::FieldParams;
use horizon::foliation::*;
use horizon::{Component, FieldRegistry, Rect};
use std::time::Instant;

fn main() {
    let reg = FieldRegistry::builtin();
    let cases: Vec<(&str, Rect)> = vec![
        ("model_reeb", Rect::new(0.0, 2.0, 0.0, 2.0)),
        ("model_reeb", Rect::centered_square(2.0)),
        ("linear_hurwitz", Rect::new(2.0, 20.0, -20.0, 20.0)),
        ("linear_hurwitz", Rect::centered_square(50.0)),
        ("rot_decay_repel", Rect::new(2.0, 50.0, 2.0, 50.0)),
        ("rot_decay_repel", Rect::centered_square(50.0)),
        ("rot_decay_repel", Rect::centered_square(5.0)),
        ("rot_feed_attract", Rect::centered_square(50.0)),
        ("rot_feed_attract", Rect::centered_square(6.0)),
        ("radial_slow", Rect::centered_square(50.0)),
        ("radial_slow", Rect::centered_square(5.0)),
    ];
    for (name, w) in cases {
        let f = reg.build(name, &FieldParams::default()).unwrap();
        let t = Instant::now();
        let r = detect_half_reeb(&f, Component::F, w, &HalfReebControls::default()).unwrap();
        println!("{name} {:?} none={} n={} {:?}", w, r.none_found, r.detected.len(), t.elapsed());
        for d in &r.detected {
            println!("   c={:.5} {:?} ends={:?} edge={:?} win={:?}", d.level, d.boundedness, d.edge_ends, d.compact_edge, d.witness_window);
        }
    }
}
