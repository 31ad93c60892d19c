use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compact convex parameter region for univalence checks.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterPolytope {
    /// `{y : ||y - center||_inf <= half_width}` in any dimension.
    Box { center: Vec<f64>, half_width: f64 },
    /// The two-dimensional box intersected with the half-plane `{y_1 >= y_0}`.
    BoxHalfSpace { center: [f64; 2], half_width: f64 },
}

/// A face of a polytope with an orthonormal basis of the subspace it spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub dim: usize,
    /// `l x dim`, columns orthonormal and ordered by coordinate index.
    pub basis: DMatrix<f64>,
    /// Grid points on the face (endpoints and corners included).
    pub points: Vec<Vec<f64>>,
}

/// `det(B' J B)`: determinant of `proj_L o J` restricted to `L = span(B)` in the coordinates of `B`.
pub fn projected_determinant(jacobian: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    (basis.transpose() * jacobian * basis).determinant()
}

/// `lo, lo + step, ...` with `hi` always included as the last value.
fn axis_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=count).map(|k| lo + k as f64 * step).collect();
    if hi - v[v.len() - 1] > 1e-9 * step {
        v.push(hi);
    } else {
        let last = v.len() - 1;
        v[last] = hi;
    }
    v
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

impl ParameterPolytope {
    pub fn dim(&self) -> usize {
        match self {
            ParameterPolytope::Box { center, .. } => center.len(),
            ParameterPolytope::BoxHalfSpace { .. } => 2,
        }
    }

    fn validate(&self, step: f64) -> Result<()> {
        let (k, finite) = match self {
            ParameterPolytope::Box { center, half_width } => {
                (*half_width, center.iter().all(|c| c.is_finite()) && !center.is_empty())
            }
            ParameterPolytope::BoxHalfSpace { center, half_width } => (*half_width, center.iter().all(|c| c.is_finite())),
        };
        if !(k > 0.0 && k.is_finite() && finite) {
            return Err(Error::UnsupportedShape("box needs a finite centre and positive half-width".into()));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Domain(format!("grid step must be positive, got {step}")));
        }
        Ok(())
    }

    /// Grid points of the whole region.
    pub fn grid_points(&self, step: f64) -> Result<Vec<Vec<f64>>> {
        Ok(self.faces(step)?.into_iter().next().expect("top face first").points)
    }

    /// Faces of dimension >= 1, the region itself first.
    ///
    /// Boxes have `3^l - 2^l` such faces (each coordinate free or pinned to a
    /// bound, at least one free). The binary box-half-plane region has the
    /// clipped polygon as top face and its edges as one-dimensional faces.
    pub fn faces(&self, step: f64) -> Result<Vec<Face>> {
        self.validate(step)?;
        match self {
            ParameterPolytope::Box { center, half_width } => Ok(box_faces(center, *half_width, step)),
            ParameterPolytope::BoxHalfSpace { center, half_width } => half_space_faces(*center, *half_width, step),
        }
    }
}

fn box_faces(center: &[f64], k: f64, step: f64) -> Vec<Face> {
    let l = center.len();
    let mut faces = Vec::new();
    // code per coordinate: 0 free, 1 lower bound, 2 upper bound; all-free first
    for code in 0..3usize.pow(l as u32) {
        let mut c = code;
        let mut free = Vec::new();
        let mut axes = Vec::with_capacity(l);
        for (j, &m) in center.iter().enumerate() {
            match c % 3 {
                0 => {
                    free.push(j);
                    axes.push(axis_points(m - k, m + k, step));
                }
                1 => axes.push(vec![m - k]),
                _ => axes.push(vec![m + k]),
            }
            c /= 3;
        }
        if free.is_empty() {
            continue;
        }
        let mut basis = DMatrix::zeros(l, free.len());
        for (col, &j) in free.iter().enumerate() {
            basis[(j, col)] = 1.0;
        }
        faces.push(Face {
            dim: free.len(),
            basis,
            points: cartesian(&axes),
        });
    }
    faces
}

/// Sutherland-Hodgman clip of the square against `y_1 - y_0 >= 0`.
fn clip_square(center: [f64; 2], k: f64) -> Vec<[f64; 2]> {
    let [a, b] = center;
    let square = [[a - k, b - k], [a + k, b - k], [a + k, b + k], [a - k, b + k]];
    let g = |p: &[f64; 2]| p[1] - p[0];
    let mut out: Vec<[f64; 2]> = Vec::new();
    for i in 0..4 {
        let p = square[i];
        let q = square[(i + 1) % 4];
        let (gp, gq) = (g(&p), g(&q));
        if gp >= 0.0 {
            out.push(p);
        }
        if (gp >= 0.0) != (gq >= 0.0) {
            let t = gp / (gp - gq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out.dedup_by(|x, y| (x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
    if out.len() > 1 {
        let (f, l) = (out[0], out[out.len() - 1]);
        if (f[0] - l[0]).abs() < 1e-12 && (f[1] - l[1]).abs() < 1e-12 {
            out.pop();
        }
    }
    out
}

fn half_space_faces(center: [f64; 2], k: f64, step: f64) -> Result<Vec<Face>> {
    let poly = clip_square(center, k);
    if poly.len() < 3 {
        return Err(Error::UnsupportedShape(
            "the half-plane y_1 >= y_0 leaves no two-dimensional part of the box".into(),
        ));
    }
    let [a, b] = center;
    let top_points = cartesian(&[axis_points(a - k, a + k, step), axis_points(b - k, b + k, step)])
        .into_iter()
        .filter(|p| p[1] >= p[0])
        .collect();
    let mut faces = vec![Face {
        dim: 2,
        basis: DMatrix::identity(2, 2),
        points: top_points,
    }];
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = dx.hypot(dy);
        if len < 1e-12 {
            continue;
        }
        // orient so the first non-zero coordinate is positive
        let (ux, uy) = if dx.abs() > 1e-12 { (dx.signum() * dx / len, dx.signum() * dy / len) } else { (0.0, dy.signum() * dy / len) };
        let m = (len / step).ceil().max(1.0) as usize;
        let points = (0..=m)
            .map(|s| {
                let t = s as f64 / m as f64;
                vec![p[0] + t * dx, p[1] + t * dy]
            })
            .collect();
        faces.push(Face {
            dim: 1,
            basis: DMatrix::from_column_slice(2, 1, &[ux, uy]),
            points,
        });
    }
    Ok(faces)
}
