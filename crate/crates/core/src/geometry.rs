//! Multiplier geometry: the field m(x) = x - x0, the radius R(x0), the sign
//! partition of the boundary, and the minimal control times attached to each
//! observation placement.
//!
//! Shapes are restricted to the interval, the axis-aligned rectangle and the
//! disk; these are the only geometries evaluated at desk scale. Boundary
//! points with m·nu = 0 are assigned to the star part of the partition so
//! that tests are deterministic.

use serde::Serialize;

use crate::error::{Error, Result};

/// Observer point. Interval domains use only the `x` coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObserverPoint {
    pub x: f64,
    pub y: f64,
}

impl ObserverPoint {
    pub fn new(x: f64, y: f64) -> Self {
        ObserverPoint { x, y }
    }

    pub fn one_d(x: f64) -> Self {
        ObserverPoint { x, y: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Spatial domain of the wave equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Domain {
    Interval { x_left: f64, x_right: f64 },
    Rectangle { corner_min: [f64; 2], corner_max: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
}

impl Domain {
    pub fn unit_interval() -> Self {
        Domain::Interval { x_left: 0.0, x_right: 1.0 }
    }

    pub fn unit_square() -> Self {
        Domain::Rectangle { corner_min: [0.0, 0.0], corner_max: [1.0, 1.0] }
    }

    pub fn unit_disk() -> Self {
        Domain::Disk { center: [0.0, 0.0], radius: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Interval { x_left, x_right } => {
                if !(x_left < x_right) {
                    return Err(Error::config(format!(
                        "degenerate interval ({x_left}, {x_right})"
                    )));
                }
            }
            Domain::Rectangle { corner_min, corner_max } => {
                if !(corner_min[0] < corner_max[0] && corner_min[1] < corner_max[1]) {
                    return Err(Error::config("rectangle corners must satisfy min < max componentwise"));
                }
            }
            Domain::Disk { radius, .. } => {
                if !(radius > 0.0) {
                    return Err(Error::config("disk radius must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Total boundary measure (arc length; endpoint count for the interval).
    pub fn boundary_measure(&self) -> f64 {
        match *self {
            Domain::Interval { .. } => 2.0,
            Domain::Rectangle { corner_min, corner_max } => {
                2.0 * (corner_max[0] - corner_min[0]) + 2.0 * (corner_max[1] - corner_min[1])
            }
            Domain::Disk { radius, .. } => 2.0 * std::f64::consts::PI * radius,
        }
    }
}

/// End of a 1-d interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

/// One boundary piece together with its parameter range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BoundaryPiece {
    /// Interval endpoint.
    End { side: Side },
    /// Full rectangle side; `fixed` names the frozen coordinate.
    RectSide { name: &'static str, measure: f64 },
    /// Disk arc, half-open angle interval [theta0, theta1) in radians,
    /// theta1 may exceed 2*pi to keep the arc contiguous.
    Arc { theta0: f64, theta1: f64, radius: f64 },
}

impl BoundaryPiece {
    pub fn measure(&self) -> f64 {
        match *self {
            BoundaryPiece::End { .. } => 1.0,
            BoundaryPiece::RectSide { measure, .. } => measure,
            BoundaryPiece::Arc { theta0, theta1, radius } => (theta1 - theta0) * radius,
        }
    }
}

/// Sign partition {Gamma(x0), Gamma_star(x0)} of the boundary.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryPartition {
    pub gamma_x0: Vec<BoundaryPiece>,
    pub gamma_star: Vec<BoundaryPiece>,
}

impl BoundaryPartition {
    pub fn gamma_measure(&self) -> f64 {
        self.gamma_x0.iter().map(BoundaryPiece::measure).sum()
    }

    pub fn star_measure(&self) -> f64 {
        self.gamma_star.iter().map(BoundaryPiece::measure).sum()
    }
}

/// R(x0): radius of the smallest ball centered at x0 containing the domain.
pub fn multiplier_radius(domain: &Domain, x0: &ObserverPoint) -> Result<f64> {
    domain.validate()?;
    if !x0.is_finite() {
        return Err(Error::config("observer point must be finite"));
    }
    Ok(match *domain {
        Domain::Interval { x_left, x_right } => {
            (x_left - x0.x).abs().max((x_right - x0.x).abs())
        }
        Domain::Rectangle { corner_min, corner_max } => {
            // Farthest corner: deviation maximized independently per axis.
            let dx = (corner_min[0] - x0.x).abs().max((corner_max[0] - x0.x).abs());
            let dy = (corner_min[1] - x0.y).abs().max((corner_max[1] - x0.y).abs());
            dx.hypot(dy)
        }
        Domain::Disk { center, radius } => {
            (center[0] - x0.x).hypot(center[1] - x0.y) + radius
        }
    })
}

/// Exact sign partition of the boundary: pieces with m·nu > 0 go to
/// Gamma(x0), pieces with m·nu <= 0 to Gamma_star(x0).
pub fn boundary_partition(domain: &Domain, x0: &ObserverPoint) -> Result<BoundaryPartition> {
    domain.validate()?;
    if !x0.is_finite() {
        return Err(Error::config("observer point must be finite"));
    }
    let mut gamma = Vec::new();
    let mut star = Vec::new();
    match *domain {
        Domain::Interval { x_left, x_right } => {
            // nu = -1 at the left end, +1 at the right end.
            if x0.x - x_left > 0.0 {
                gamma.push(BoundaryPiece::End { side: Side::Left });
            } else {
                star.push(BoundaryPiece::End { side: Side::Left });
            }
            if x_right - x0.x > 0.0 {
                gamma.push(BoundaryPiece::End { side: Side::Right });
            } else {
                star.push(BoundaryPiece::End { side: Side::Right });
            }
        }
        Domain::Rectangle { corner_min, corner_max } => {
            // m·nu is constant along each axis-aligned side.
            let lx = corner_max[0] - corner_min[0];
            let ly = corner_max[1] - corner_min[1];
            let sides = [
                ("x=min", x0.x - corner_min[0], ly),
                ("x=max", corner_max[0] - x0.x, ly),
                ("y=min", x0.y - corner_min[1], lx),
                ("y=max", corner_max[1] - x0.y, lx),
            ];
            for (name, m_dot_nu, measure) in sides {
                let piece = BoundaryPiece::RectSide { name, measure };
                if m_dot_nu > 0.0 {
                    gamma.push(piece);
                } else {
                    star.push(piece);
                }
            }
        }
        Domain::Disk { center, radius } => {
            // On the circle, m·nu(theta) = rho cos(theta - theta_d) + r with
            // rho = |center - x0|. Gamma(x0) is the arc |theta - theta_d| < w,
            // w = arccos(-r/rho), the full circle when rho <= r.
            let dx = center[0] - x0.x;
            let dy = center[1] - x0.y;
            let rho = dx.hypot(dy);
            if rho < radius || rho == 0.0 {
                gamma.push(BoundaryPiece::Arc {
                    theta0: 0.0,
                    theta1: 2.0 * std::f64::consts::PI,
                    radius,
                });
            } else {
                let theta_d = dy.atan2(dx);
                let w = (-radius / rho).clamp(-1.0, 1.0).acos();
                gamma.push(BoundaryPiece::Arc {
                    theta0: theta_d - w,
                    theta1: theta_d + w,
                    radius,
                });
                star.push(BoundaryPiece::Arc {
                    theta0: theta_d + w,
                    theta1: theta_d - w + 2.0 * std::f64::consts::PI,
                    radius,
                });
            }
        }
    }
    Ok(BoundaryPartition { gamma_x0: gamma, gamma_star: star })
}

/// Where the observation/control acts when asking for a minimal time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Placement {
    /// Control at one end of an interval.
    BoundaryOneEnd,
    /// Controls at both ends of an interval.
    BoundaryBothEnds,
    /// Internal control on (l1, l2), unit-interval coordinates.
    InternalInterval { l1: f64, l2: f64 },
    /// 2R(x0)/sqrt(a0): the multiplier-method threshold for any shape.
    MultiplierGeometric,
}

/// Threshold time of the corresponding controllability theorem.
pub fn minimal_control_time(
    domain: &Domain,
    x0: &ObserverPoint,
    a0: f64,
    placement: Placement,
) -> Result<f64> {
    domain.validate()?;
    if !(a0 > 0.0) {
        return Err(Error::config("a0 must be positive"));
    }
    let c = a0.sqrt();
    match placement {
        Placement::BoundaryOneEnd => match domain {
            Domain::Interval { .. } => Ok(2.0 / c),
            _ => Err(Error::config("one-end placement requires an interval domain")),
        },
        Placement::BoundaryBothEnds => match domain {
            Domain::Interval { .. } => Ok(1.0 / c),
            _ => Err(Error::config("both-ends placement requires an interval domain")),
        },
        Placement::InternalInterval { l1, l2 } => {
            if !matches!(domain, Domain::Interval { .. }) {
                return Err(Error::config("internal placement requires an interval domain"));
            }
            if !(0.0 <= l1 && l1 < l2 && l2 <= 1.0) {
                return Err(Error::config(format!("invalid interval bounds ({l1}, {l2})")));
            }
            Ok(2.0 * (l1 / c).max((1.0 - l2) / c))
        }
        Placement::MultiplierGeometric => {
            Ok(2.0 * multiplier_radius(domain, x0)? / c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn square_radius_constants() {
        let sq = Domain::unit_square();
        let center = ObserverPoint::new(0.5, 0.5);
        let corner = ObserverPoint::new(1.0, 1.0);
        let mid_side = ObserverPoint::new(0.5, 0.0);
        // 2R values reported for the unit square: sqrt(2), 2 sqrt(2), sqrt(5).
        assert_relative_eq!(
            2.0 * multiplier_radius(&sq, &center).unwrap(),
            SQRT2,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            2.0 * multiplier_radius(&sq, &corner).unwrap(),
            2.0 * SQRT2,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            2.0 * multiplier_radius(&sq, &mid_side).unwrap(),
            5.0_f64.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn disk_and_interval_radius() {
        let disk = Domain::unit_disk();
        assert_relative_eq!(
            2.0 * multiplier_radius(&disk, &ObserverPoint::new(0.0, 0.0)).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        let iv = Domain::unit_interval();
        assert_relative_eq!(
            multiplier_radius(&iv, &ObserverPoint::one_d(0.0)).unwrap(),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn interval_partition_signs() {
        let iv = Domain::unit_interval();
        let p = boundary_partition(&iv, &ObserverPoint::one_d(0.0)).unwrap();
        assert_eq!(p.gamma_x0, vec![BoundaryPiece::End { side: Side::Right }]);
        assert_eq!(p.gamma_star, vec![BoundaryPiece::End { side: Side::Left }]);
    }

    #[test]
    fn square_partition_center_and_corner() {
        let sq = Domain::unit_square();
        let full = boundary_partition(&sq, &ObserverPoint::new(0.5, 0.5)).unwrap();
        assert_eq!(full.gamma_x0.len(), 4);
        assert!(full.gamma_star.is_empty());

        // x0 at the (1,1) corner: the two far sides carry m·nu > 0; the two
        // sides through the corner have m·nu = 0 and land in the star part.
        let corner = boundary_partition(&sq, &ObserverPoint::new(1.0, 1.0)).unwrap();
        let names: Vec<&str> = corner
            .gamma_x0
            .iter()
            .map(|p| match p {
                BoundaryPiece::RectSide { name, .. } => *name,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(names, vec!["x=min", "y=min"]);
        assert_eq!(corner.gamma_star.len(), 2);
    }

    #[test]
    fn partition_measures_are_complete() {
        let cases = [
            (Domain::unit_square(), ObserverPoint::new(0.3, 0.9)),
            (Domain::unit_square(), ObserverPoint::new(2.0, -1.0)),
            (Domain::unit_disk(), ObserverPoint::new(1.7, 0.4)),
            (Domain::unit_disk(), ObserverPoint::new(0.0, 0.0)),
            (Domain::unit_interval(), ObserverPoint::one_d(0.4)),
        ];
        for (dom, x0) in cases {
            let p = boundary_partition(&dom, &x0).unwrap();
            let total = p.gamma_measure() + p.star_measure();
            assert_relative_eq!(total, dom.boundary_measure(), max_relative = 1e-12);
        }
    }

    #[test]
    fn disk_gamma_shrinks_to_half_circle() {
        // Angular measure of Gamma(x0) is non-increasing as x0 recedes and
        // tends to a half-circle.
        let disk = Domain::unit_disk();
        let mut last = f64::INFINITY;
        for d in [0.0, 1.0, 10.0, 100.0] {
            let p = boundary_partition(&disk, &ObserverPoint::new(d, 0.0)).unwrap();
            let measure = p.gamma_measure();
            assert!(measure <= last + 1e-12, "gamma measure grew at |x0| = {d}");
            last = measure;
        }
        assert_relative_eq!(last, std::f64::consts::PI, max_relative = 0.02);
    }

    #[test]
    fn control_time_formulas() {
        let iv = Domain::unit_interval();
        let x0 = ObserverPoint::one_d(0.0);
        assert_relative_eq!(
            minimal_control_time(&iv, &x0, 1.0, Placement::BoundaryOneEnd).unwrap(),
            2.0
        );
        assert_relative_eq!(
            minimal_control_time(&iv, &x0, 4.0, Placement::BoundaryBothEnds).unwrap(),
            0.5
        );
        assert_relative_eq!(
            minimal_control_time(&iv, &x0, 1.0, Placement::InternalInterval { l1: 0.4, l2: 0.6 })
                .unwrap(),
            0.8
        );
        assert_relative_eq!(
            minimal_control_time(&iv, &x0, 1.0, Placement::MultiplierGeometric).unwrap(),
            2.0
        );
        assert!(minimal_control_time(
            &iv,
            &x0,
            1.0,
            Placement::InternalInterval { l1: 0.6, l2: 0.6 }
        )
        .is_err());
    }

    proptest! {
        // Translating the domain and observer together changes nothing.
        #[test]
        fn translation_covariance(
            x0x in -2.0f64..2.0, x0y in -2.0f64..2.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0,
        ) {
            let dom = Domain::Rectangle { corner_min: [0.0, 0.0], corner_max: [1.0, 2.0] };
            let dom_t = Domain::Rectangle { corner_min: [tx, ty], corner_max: [1.0 + tx, 2.0 + ty] };
            let p0 = ObserverPoint::new(x0x, x0y);
            let p1 = ObserverPoint::new(x0x + tx, x0y + ty);
            let r0 = multiplier_radius(&dom, &p0).unwrap();
            let r1 = multiplier_radius(&dom_t, &p1).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-12 * (1.0 + r0.abs()));
            let b0 = boundary_partition(&dom, &p0).unwrap();
            let b1 = boundary_partition(&dom_t, &p1).unwrap();
            prop_assert!((b0.gamma_measure() - b1.gamma_measure()).abs() <= 1e-12);
        }
    }
}
