//! The foliations `F(f)` and `F(g)` by level curves of the two components.

pub mod contour;
pub mod leaf;
pub mod reeb;

pub use contour::{level_components, LevelComponent, LevelSetScan, ScalarGrid};
pub use leaf::{leaf_tol, trace_leaf, Extent, LeafArc, LeafControls, LeafEnd, MONOTONICITY_TOL};
pub use reeb::{
    detect_half_reeb, vertical_convexity_probe, Boundedness, ConvexityProbe, HalfReebControls, HalfReebReport,
    HalfReebWitness, Side,
};
