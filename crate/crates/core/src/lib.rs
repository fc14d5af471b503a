//! Potential theory on the homogeneous tree and the unit disk.
pub mod disk;
pub mod kernels;
pub mod linalg;
pub mod mc;
pub mod moments;
pub mod potential;
pub mod quad;
pub mod rational;
pub mod slices;
pub mod tree;
pub mod truncation;
pub mod weighted;

pub use disk::{
    arc_harmonic_mass, boundary_integral_disk, green_disk, hyperbolic_dist, poisson,
    BlaschkeData, BoundarySetD, DiskError, DiskIntegral, DiskPoint, DiskVerdict,
};
pub use moments::{
    boundary_integral_tree, extended_moment, first_moment, majorant_h, truncated_majorant,
    upsilon, verify_divergence, verify_majorant, verify_upsilon_divergence, Enclosure,
    LevelWeight, MomentError, MomentResult, PhiSpec, PsiSpec, Scalar, Verdict,
};
pub use potential::{PotentialValue, TreeFunction, VertexMeasure};
pub use rational::Rat;
pub use tree::{BoundarySetT, End, Site, TreeError, TreeParams, Vertex};
pub use truncation::{HittingSolution, Membership, TruncationT};
pub use mc::{
    srw_cylinder_measure, srw_expected_visits, weighted_expected_visits, wos_harmonic_measure,
    wos_truncated_green_disk, BoundaryArc, McConfig, McError, McEstimate,
};
pub use weighted::{
    boundary_metric_weighted, first_passage, green_weighted, solve_f, ConductanceTree, FTable,
    WeightedError, WeightedSite,
};
