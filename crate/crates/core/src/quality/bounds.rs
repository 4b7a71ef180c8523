//! Closed-form limits evaluated at the run parameters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Headline distance factor: reconstruction within `30.52·ε²·lfs`.
pub const DISTANCE_FACTOR: f64 = 30.52;
/// Guide-triangle circumradius over `δ·lfs`, small-ε headline.
pub const HEADLINE_CIRCUMRADIUS: f64 = 1.38;
/// Guide-triangle circumradius over the shortest edge, small-ε headline.
pub const HEADLINE_EDGE_CIRCUMRADIUS: f64 = 3.68;
pub const HEADLINE_INTERIOR_FATNESS: f64 = 14.1;
pub const HEADLINE_BOUNDARY_FATNESS: f64 = 13.65;
pub const HEADLINE_ELEVATION_DEG: f64 = 29.34;

/// Every limit the checks compare against, derived from `(ε, σ, δ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub eps: f64,
    pub sigma: f64,
    pub delta: f64,
    /// `2/(1−δ)`.
    pub kappa: f64,
    /// `σε/(1+σε)`.
    pub kappa_eps: f64,
    /// Neighbor distance over `lfs(p_i)` lies in `[edge_min, edge_max]`.
    pub edge_min: f64,
    pub edge_max: f64,
    /// Longest over shortest guide edge, `κδ/κ_ε`.
    pub edge_ratio: f64,
    /// Seed elevation above the tangent plane, radians.
    pub elevation: f64,
    /// Circumradius over `δ·lfs` of the smallest-lfs vertex.
    pub circumradius: f64,
    /// Circumradius over the shortest guide edge.
    pub edge_circumradius: f64,
    /// The closed forms above are vacuous at these parameters and the
    /// small-ε headline values are used instead.
    pub headline_radii: bool,
    /// Sample normal deviation over `δ`.
    pub sample_normal: f64,
    /// Guide-triangle normal deviation over `δ`.
    pub triangle_normal: f64,
    /// Smallest guide-triangle angle, radians.
    pub min_angle: f64,
    /// Altitude over edge length.
    pub altitude_ratio: f64,
    /// Seed height above the guide-triangle plane over `δ·lfs`.
    pub seed_height: f64,
    /// Boundary-cell inradius over `δ·lfs`.
    pub vertex_inradius: f64,
    pub interior_fatness: f64,
    /// `None` when `vertex_inradius ≤ 0`.
    pub boundary_fatness: Option<f64>,
    /// Relative two-sided distance, `h_t·ε²`.
    pub distance: f64,
    /// `18√3/π·ε⁻³`, multiplied by `∫ lfs⁻³` over the volume.
    pub interior_size_factor: f64,
    /// Octree leaf circumradius over sizing at the leaf center.
    pub leaf_radius_min: f64,
    pub leaf_radius_max: f64,
    /// Leaf circumradius over sizing at any point of the leaf.
    pub point_radius_min: f64,
    pub point_radius_max: f64,
}

impl Bounds {
    pub fn new(eps: f64, sigma: f64, delta: f64) -> Self {
        let kappa = 2.0 / (1.0 - delta);
        let kd = kappa * delta;
        let se = sigma * eps;
        let kappa_eps = se / (1.0 + se);

        let alpha2 = kd * delta * delta * (2.0 + kd) / (se * se * (1.0 - kd) * (1.0 - kd));
        let (circumradius, edge_circumradius, headline_radii) = if 4.0 * alpha2 < 1.0 && kd < 1.0 {
            let c = 1.0 / (1.0 - 4.0 * alpha2).sqrt();
            (c * (1.0 + kd), delta * c / (se * (1.0 - kd)), false)
        } else {
            (HEADLINE_CIRCUMRADIUS, HEADLINE_EDGE_CIRCUMRADIUS, true)
        };

        let sample_normal = kappa / (1.0 - kd);
        let rho = (circumradius * delta).min(1.0);
        let spread = rho.asin() + (2.0 / 3f64.sqrt() * (2.0 * rho.asin()).sin()).min(1.0).asin();
        let triangle_normal = sample_normal + spread / delta;

        let seed_height = 0.5 - (5.0 + 2.0 * triangle_normal) * eps;
        let vertex_inradius = seed_height / (1.0 + 3.0 / (2.0 * sigma * edge_circumradius));
        let boundary_fatness = (vertex_inradius > 0.0 && delta < 1.0 / 3.0)
            .then(|| 4.0 * (1.0 + delta) / ((1.0 - 3.0 * delta) * (1.0 - delta).powi(2) * vertex_inradius));
        let interior_fatness = if delta < 1.0 / 3.0 {
            8.0 * 3f64.sqrt() * (1.0 + delta) / (1.0 - 3.0 * delta)
        } else {
            f64::INFINITY
        };

        Bounds {
            eps,
            sigma,
            delta,
            kappa,
            kappa_eps,
            edge_min: kappa_eps,
            edge_max: kd,
            edge_ratio: kd / kappa_eps,
            elevation: (0.5 - 5.0 * eps + 2.0 * eps.powi(3)).clamp(-1.0, 1.0).asin(),
            circumradius,
            edge_circumradius,
            headline_radii,
            sample_normal,
            triangle_normal,
            min_angle: (1.0 / (2.0 * edge_circumradius)).asin(),
            altitude_ratio: 1.0 / (4.0 * edge_circumradius),
            seed_height,
            vertex_inradius,
            interior_fatness,
            boundary_fatness,
            distance: DISTANCE_FACTOR * eps * eps,
            interior_size_factor: 18.0 * 3f64.sqrt() / PI / eps.powi(3),
            leaf_radius_min: delta / (2.0 + delta),
            leaf_radius_max: delta,
            point_radius_min: delta / (2.0 * (1.0 + delta)),
            point_radius_max: delta / (1.0 - delta),
        }
    }

    /// Bounds at `δ = 2ε`.
    pub fn standard(eps: f64, sigma: f64) -> Self {
        Self::new(eps, sigma, 2.0 * eps)
    }
}
