//! Conforming Voronoi volume meshing of smooth closed surfaces.
//!
//! The pipeline samples a surface, places a ball around every sample, takes
//! the uncovered corners of the union of balls as Voronoi seeds on both sides
//! of the surface, adds graded interior seeds from an octree, computes the
//! Voronoi diagram by per-cell clipping, and reads the surface back as the
//! faces separating outside seeds from inside seeds.

pub mod ball_union;
pub mod geom;
pub mod io;
pub mod octree;
pub mod pipeline;
pub mod quality;
pub mod sampler;
pub mod spatial;
pub mod surface;
pub mod voronoi;

pub use geom::{Aabb, Ball, Tolerance, Vec3};
pub use surface::{Side, SurfacePoint, SurfaceSpec};
