//! Mixed-monotone reachability analysis.
//!
//! Decomposition functions bound a disturbed vector field from below and
//! above; the resulting embedding system yields hyperrectangular reachable
//! set over-approximations, which are combined across linear changes of
//! coordinates into parallelotope intersections.

pub mod decomp;
pub mod embed;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod multiorder;
pub mod ode;
pub mod oracle;
pub mod system;

pub use decomp::{
    check_decomposition, closed_form_decomposition, closed_form_from_str, combine, jacobian_sign_decomposition,
    monotone_decomposition, tight_decomposition, CheckOptions, CheckReport, Construction, Decomposition,
};
pub use embed::{
    backward_reach_box, embedding_function, forward_reach_box, integrate, Direction, EmbeddingFunction, ReachSpec,
    Trajectory,
};
pub use error::{Error, ExprError, Result};
pub use expr::{Expr, VarKind, VarSpace};
pub use geometry::{EmbeddingState, Hyperrect, Matrix, Parallelotope, Polygon2D};
pub use multiorder::{
    build_decomposition, default_transform_family, reach_intersection, reach_parallelotope, reach_union,
    DecompositionMethod, IntersectionResult, PlanEntry, TransformPlan, UnionInitialSet,
};
pub use oracle::{
    audit_containment, backward_witnesses, occupancy_area, sample_endpoints, ContainmentReport, InitialSet, Region,
    SampleConfig,
};
pub use system::{presets, SystemDef, TransformedSystem, VectorField};
