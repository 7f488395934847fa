//! Bounded domains the lattice is cut from.
//!
//! A domain is described by a signed distance evaluator (negative inside,
//! positive outside) plus a bounding box. Rectangles and discs (balls in 3D)
//! carry closed-form projections; implicit domains fall back on an iterative
//! nearest-point search.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type SignedDistance<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

#[derive(Clone)]
pub enum Shape<T: Scalar> {
    /// Axis-aligned box `[0, a] x [0, b] (x [0, c])`.
    Rectangle { sides: Vec<T> },
    /// Disc (ball in 3D).
    Disc { center: Vec<T>, radius: T },
    /// Arbitrary domain given by a signed distance evaluator and a box that
    /// contains it.
    Implicit {
        label: String,
        sdf: SignedDistance<T>,
        lower: Vec<T>,
        upper: Vec<T>,
    },
}

#[derive(Clone)]
pub struct DomainSpec<T: Scalar> {
    shape: Shape<T>,
}

impl<T: Scalar> fmt::Debug for DomainSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Rectangle { sides } => write!(f, "Rectangle({sides:?})"),
            Shape::Disc { center, radius } => write!(f, "Disc({center:?}, {radius})"),
            Shape::Implicit { label, lower, upper, .. } => {
                write!(f, "Implicit({label}, {lower:?}..{upper:?})")
            }
        }
    }
}

/// Nearest point on the boundary and the inward unit normal there.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryProjection<T> {
    pub point: Vec<T>,
    pub normal: Vec<T>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::InvalidDomain(format!("dimension must be 2 or 3, got {d}")))
    }
}

impl<T: Scalar> DomainSpec<T> {
    pub fn rectangle(sides: &[T]) -> Result<Self> {
        check_dim(sides.len())?;
        if sides.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::InvalidDomain(format!("rectangle sides must be positive: {sides:?}")));
        }
        Ok(Self { shape: Shape::Rectangle { sides: sides.to_vec() } })
    }

    pub fn disc(center: &[T], radius: T) -> Result<Self> {
        check_dim(center.len())?;
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidDomain(format!("radius must be positive: {radius}")));
        }
        Ok(Self { shape: Shape::Disc { center: center.to_vec(), radius } })
    }

    /// Implicit domain. `sdf` must be negative inside and positive outside,
    /// and the domain must lie within `[lower, upper]`.
    pub fn implicit(
        label: impl Into<String>,
        lower: &[T],
        upper: &[T],
        sdf: impl Fn(&[T]) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(lower.len())?;
        if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidDomain("implicit domain needs a nonempty bounding box".into()));
        }
        Ok(Self {
            shape: Shape::Implicit {
                label: label.into(),
                sdf: Arc::new(sdf),
                lower: lower.to_vec(),
                upper: upper.to_vec(),
            },
        })
    }

    /// Ellipse / ellipsoid centred at `center` with the given semi-axes, as an
    /// implicit domain. The evaluator is the normalised level-set function
    /// `(|(x - c) / a| - 1) * min(a)`, which has the right sign and is exact
    /// for a disc.
    pub fn ellipse(center: &[T], semi_axes: &[T]) -> Result<Self> {
        if center.len() != semi_axes.len() {
            return Err(Error::InvalidDomain("center and semi-axes differ in dimension".into()));
        }
        let c = center.to_vec();
        let a = semi_axes.to_vec();
        let amin = a.iter().cloned().fold(T::infinity(), T::min);
        let lower: Vec<T> = c.iter().zip(&a).map(|(&c, &a)| c - a).collect();
        let upper: Vec<T> = c.iter().zip(&a).map(|(&c, &a)| c + a).collect();
        Self::implicit("ellipse", &lower, &upper, move |x: &[T]| {
            let r2: T = x.iter().zip(&c).zip(&a).map(|((&x, &c), &a)| ((x - c) / a).powi(2)).sum();
            (r2.sqrt() - T::one()) * amin
        })
    }

    pub fn shape(&self) -> &Shape<T> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Rectangle { sides } => sides.len(),
            Shape::Disc { center, .. } => center.len(),
            Shape::Implicit { lower, .. } => lower.len(),
        }
    }

    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match &self.shape {
            Shape::Rectangle { sides } => (vec![T::zero(); sides.len()], sides.clone()),
            Shape::Disc { center, radius } => (
                center.iter().map(|&c| c - *radius).collect(),
                center.iter().map(|&c| c + *radius).collect(),
            ),
            Shape::Implicit { lower, upper, .. } => (lower.clone(), upper.clone()),
        }
    }

    /// Largest bounding-box side, used to scale geometric tolerances.
    pub fn length_scale(&self) -> T {
        let (lo, hi) = self.bounding_box();
        lo.iter().zip(&hi).map(|(&l, &h)| h - l).fold(T::zero(), T::max)
    }

    pub fn signed_distance(&self, x: &[T]) -> T {
        match &self.shape {
            Shape::Rectangle { sides } => {
                let mut outside = T::zero();
                let mut inside = -T::infinity();
                for (&xi, &a) in x.iter().zip(sides) {
                    let half = a / T::lit(2.0);
                    let q = (xi - half).abs() - half;
                    outside = outside + q.max(T::zero()).powi(2);
                    inside = inside.max(q);
                }
                outside.sqrt() + inside.min(T::zero())
            }
            Shape::Disc { center, radius } => norm(&sub(x, center)) - *radius,
            Shape::Implicit { sdf, .. } => sdf(x),
        }
    }

    /// Nearest boundary point of `x` and the inward unit normal there.
    ///
    /// On a rectangle, ties between faces (corners) resolve to the normalised
    /// sum of the tied inward face normals, i.e. the angle bisector.
    pub fn nearest_boundary(&self, x: &[T]) -> Result<BoundaryProjection<T>> {
        match &self.shape {
            Shape::Rectangle { sides } => Ok(rectangle_projection(sides, x)),
            Shape::Disc { center, radius } => {
                let r = sub(x, center);
                let len = norm(&r);
                if !(len > T::tiny() * *radius) {
                    return Err(Error::NearestPointDiverged {
                        point: x.iter().map(|v| v.as_f64()).collect(),
                        last_step: f64::NAN,
                    });
                }
                let point = center.iter().zip(&r).map(|(&c, &ri)| c + *radius * ri / len).collect();
                let normal = r.iter().map(|&ri| -ri / len).collect();
                Ok(BoundaryProjection { point, normal })
            }
            Shape::Implicit { sdf, .. } => implicit_projection(sdf.as_ref(), x, self.length_scale()),
        }
    }

    pub fn nearest_boundary_normal(&self, x: &[T]) -> Result<Vec<T>> {
        self.nearest_boundary(x).map(|p| p.normal)
    }
}

fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn rectangle_projection<T: Scalar>(sides: &[T], x: &[T]) -> BoundaryProjection<T> {
    let d = sides.len();
    // (distance, axis, inward sign)
    let mut faces = Vec::with_capacity(2 * d);
    for (i, (&xi, &a)) in x.iter().zip(sides).enumerate() {
        faces.push((xi.abs(), i, T::one()));
        faces.push(((a - xi).abs(), i, -T::one()));
    }
    let dmin = faces.iter().map(|f| f.0).fold(T::infinity(), T::min);
    let scale = sides.iter().cloned().fold(T::zero(), T::max);
    let tol = T::tiny() * scale;
    let mut normal = vec![T::zero(); d];
    let mut point = x.to_vec();
    for &(dist, axis, sign) in &faces {
        if dist - dmin <= tol {
            normal[axis] = normal[axis] + sign;
            point[axis] = if sign > T::zero() { T::zero() } else { sides[axis] };
        }
    }
    let len = norm(&normal);
    for n in &mut normal {
        *n = *n / len;
    }
    BoundaryProjection { point, normal }
}

fn gradient<T: Scalar>(sdf: &dyn Fn(&[T]) -> T, z: &[T], h: T) -> Vec<T> {
    let mut g = vec![T::zero(); z.len()];
    let mut p = z.to_vec();
    for i in 0..z.len() {
        p[i] = z[i] + h;
        let fp = sdf(&p);
        p[i] = z[i] - h;
        let fm = sdf(&p);
        p[i] = z[i];
        g[i] = (fp - fm) / (T::lit(2.0) * h);
    }
    g
}

/// Damped projected-gradient search for the nearest zero of `sdf`.
fn implicit_projection<T: Scalar>(
    sdf: &dyn Fn(&[T]) -> T,
    x: &[T],
    scale: T,
) -> Result<BoundaryProjection<T>> {
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(256.0)) * scale;
    let h = T::epsilon().cbrt() * scale;
    let damping = T::lit(0.5);
    let mut z = x.to_vec();
    let mut last_step = T::infinity();
    for _ in 0..500 {
        let before = z.clone();
        // Newton step onto the zero level set.
        for _ in 0..3 {
            let g = gradient(sdf, &z, h);
            let g2 = dot(&g, &g);
            if !(g2 > T::zero()) {
                break;
            }
            let f = sdf(&z);
            for (zi, gi) in z.iter_mut().zip(&g) {
                *zi = *zi - f * *gi / g2;
            }
        }
        // Slide along the level set towards the foot of the perpendicular.
        let g = gradient(sdf, &z, h);
        let gn = norm(&g);
        if !(gn > T::zero()) {
            break;
        }
        let r = sub(x, &z);
        let rg = dot(&r, &g) / gn;
        for i in 0..z.len() {
            z[i] = z[i] + damping * (r[i] - rg * g[i] / gn);
        }
        last_step = norm(&sub(&z, &before));
        if last_step < tol && sdf(&z).abs() < tol {
            let g = gradient(sdf, &z, h);
            let gn = norm(&g);
            return Ok(BoundaryProjection { point: z, normal: g.iter().map(|&gi| -gi / gn).collect() });
        }
    }
    Err(Error::NearestPointDiverged {
        point: x.iter().map(|v| v.as_f64()).collect(),
        last_step: last_step.as_f64(),
    })
}
