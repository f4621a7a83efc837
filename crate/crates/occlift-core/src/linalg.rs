//! Fixed-size 3-vector / 3x3-matrix arithmetic and a one-sided Jacobi
//! SVD. Camera geometry and Procrustes alignment only ever need the
//! 3x3 case, so nothing here is generic.

use core::ops::{Add, Mul, Neg, Sub};

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn cross(&self, other: &Vec3) -> Vec3 {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = other.0;
        Vec3([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0).then(|| self.scaled(1.0 / n))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1], self.0[2] - rhs.0[2]])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self.scaled(-1.0)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Self {
        Mat3([r0.0, r1.0, r2.0])
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3([[c0.0[0], c1.0[0], c2.0[0]], [c0.0[1], c1.0[1], c2.0[1]], [c0.0[2], c1.0[2], c2.0[2]]])
    }

    pub fn diag(d0: f64, d1: f64, d2: f64) -> Self {
        Mat3([[d0, 0.0, 0.0], [0.0, d1, 0.0], [0.0, 0.0, d2]])
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3(self.0[i])
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3([self.0[0][j], self.0[1][j], self.0[2][j]])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn scaled(&self, s: f64) -> Mat3 {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// Inverse by adjugate; None when the determinant vanishes.
    pub fn inverse(&self) -> Option<Mat3> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let m = &self.0;
        let inv_det = 1.0 / det;
        let cof = |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
        Some(Mat3([
            [cof(1, 1, 2, 2) * inv_det, -cof(0, 1, 2, 2) * inv_det, cof(0, 1, 1, 2) * inv_det],
            [-cof(1, 0, 2, 2) * inv_det, cof(0, 0, 2, 2) * inv_det, -cof(0, 0, 1, 2) * inv_det],
            [cof(1, 0, 2, 1) * inv_det, -cof(0, 0, 2, 1) * inv_det, cof(0, 0, 1, 1) * inv_det],
        ]))
    }

    /// Rotation about a unit axis by `angle` radians (Rodrigues).
    pub fn rotation_axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let a = axis.normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let [x, y, z] = a.0;
        Mat3([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_rotation(&self, tol: f64) -> bool {
        let gram = self.transpose() * *self;
        let mut off = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                off = off.max((gram.0[i][j] - want).abs());
            }
        }
        off <= tol && (self.det() - 1.0).abs() <= tol
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Mat3(out)
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        Vec3([self.row(0).dot(&rhs), self.row(1).dot(&rhs), self.row(2).dot(&rhs)])
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, rhs: Mat3) -> Mat3 {
        let mut out = self;
        for (o, r) in out.0.iter_mut().flatten().zip(rhs.0.iter().flatten()) {
            *o += r;
        }
        out
    }
}

/// Result of [`svd3`]: m = u * diag(sigma) * vt, with u and v
/// orthonormal and sigma non-negative descending.
#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub u: Mat3,
    pub sigma: [f64; 3],
    pub vt: Mat3,
}

const JACOBI_SWEEPS: usize = 30;
const JACOBI_TOL: f64 = 1e-12;

/// One-sided Jacobi SVD. Columns of a working copy are orthogonalized
/// by right rotations accumulated into V; singular values are the final
/// column norms. Rank-deficient inputs get their null columns of U
/// completed by cross products.
pub fn svd3(m: &Mat3) -> Svd3 {
    let mut b = *m;
    let mut v = Mat3::IDENTITY;

    for _ in 0..JACOBI_SWEEPS {
        let mut converged = true;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let bp = b.col(p);
            let bq = b.col(q);
            let alpha = bp.dot(&bp);
            let beta = bq.dot(&bq);
            let gamma = bp.dot(&bq);
            if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                continue;
            }
            converged = false;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for row in 0..3 {
                let bp = b.0[row][p];
                let bq = b.0[row][q];
                b.0[row][p] = c * bp - s * bq;
                b.0[row][q] = s * bp + c * bq;
                let vp = v.0[row][p];
                let vq = v.0[row][q];
                v.0[row][p] = c * vp - s * vq;
                v.0[row][q] = s * vp + c * vq;
            }
        }
        if converged {
            break;
        }
    }

    let mut sigma = [b.col(0).norm(), b.col(1).norm(), b.col(2).norm()];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).expect("norms are finite"));
    let b_sorted = Mat3::from_cols(b.col(order[0]), b.col(order[1]), b.col(order[2]));
    let v_sorted = Mat3::from_cols(v.col(order[0]), v.col(order[1]), v.col(order[2]));
    sigma = [sigma[order[0]], sigma[order[1]], sigma[order[2]]];

    let cutoff = sigma[0] * 1e-13;
    let mut u_cols: [Option<Vec3>; 3] = [None, None, None];
    for j in 0..3 {
        if sigma[j] > cutoff && sigma[j] > 0.0 {
            u_cols[j] = Some(b_sorted.col(j).scaled(1.0 / sigma[j]));
        } else {
            sigma[j] = 0.0;
        }
    }
    complete_orthonormal(&mut u_cols);
    let u = Mat3::from_cols(u_cols[0].unwrap(), u_cols[1].unwrap(), u_cols[2].unwrap());

    Svd3 { u, sigma, vt: v_sorted.transpose() }
}

/// Fill missing columns so the three form an orthonormal basis.
fn complete_orthonormal(cols: &mut [Option<Vec3>; 3]) {
    let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    for j in 0..3 {
        if cols[j].is_some() {
            continue;
        }
        let fixed: alloc::vec::Vec<Vec3> = cols.iter().flatten().copied().collect();
        let candidate = match fixed.len() {
            0 => axes[j],
            1 => {
                // Axis least aligned with the existing column.
                let u0 = fixed[0];
                let best = axes
                    .iter()
                    .min_by(|a, b| {
                        u0.dot(a).abs().partial_cmp(&u0.dot(b).abs()).expect("finite")
                    })
                    .copied()
                    .expect("three axes");
                u0.cross(&best).normalized().expect("non-parallel by choice")
            }
            _ => fixed[0].cross(&fixed[1]).normalized().expect("orthonormal inputs"),
        };
        cols[j] = Some(candidate);
    }
}

/// Least-squares solve of a (possibly near-singular) symmetric 3x3
/// system via the SVD pseudo-inverse. Used by the DLT normal equations.
pub fn solve3_pseudo(a: &Mat3, b: Vec3) -> Vec3 {
    let svd = svd3(a);
    let utb = svd.u.transpose() * b;
    let mut scaled = [0.0; 3];
    let cutoff = svd.sigma[0] * 1e-13;
    for i in 0..3 {
        scaled[i] = if svd.sigma[i] > cutoff && svd.sigma[i] > 0.0 { utb.0[i] / svd.sigma[i] } else { 0.0 };
    }
    svd.vt.transpose() * Vec3(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reconstruction_error(m: &Mat3, svd: &Svd3) -> f64 {
        let rec = svd.u * Mat3::diag(svd.sigma[0], svd.sigma[1], svd.sigma[2]) * svd.vt;
        let mut err = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                err += (rec.0[i][j] - m.0[i][j]).powi(2);
            }
        }
        err.sqrt()
    }

    fn assert_orthonormal(m: &Mat3) {
        let gram = m.transpose() * *m;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.0[i][j] - want).abs() < 1e-10, "gram[{i}][{j}] = {}", gram.0[i][j]);
            }
        }
    }

    #[test]
    fn svd_of_identity() {
        let svd = svd3(&Mat3::IDENTITY);
        assert_eq!(svd.sigma, [1.0, 1.0, 1.0]);
        assert!(reconstruction_error(&Mat3::IDENTITY, &svd) < 1e-12);
    }

    #[test]
    fn svd_of_diagonal_sorts_descending() {
        let m = Mat3::diag(1.0, 3.0, 2.0);
        let svd = svd3(&m);
        assert!((svd.sigma[0] - 3.0).abs() < 1e-12);
        assert!((svd.sigma[1] - 2.0).abs() < 1e-12);
        assert!((svd.sigma[2] - 1.0).abs() < 1e-12);
        assert!(reconstruction_error(&m, &svd) < 1e-10);
    }

    #[test]
    fn svd_of_random_rotation_has_unit_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let axis = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if axis.norm() < 1e-3 {
                continue;
            }
            let angle = rng.random_range(-3.1..3.1);
            let r = Mat3::rotation_axis_angle(axis, angle);
            let svd = svd3(&r);
            for s in svd.sigma {
                assert!((s - 1.0).abs() < 1e-10, "sigma {s}");
            }
            assert!(reconstruction_error(&r, &svd) < 1e-10);
        }
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mut m = Mat3::IDENTITY;
            for row in m.0.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-1e3..1e3);
                }
            }
            let svd = svd3(&m);
            assert!(reconstruction_error(&m, &svd) < 1e-10 * m.frobenius_norm().max(1.0));
            assert_orthonormal(&svd.u);
            assert_orthonormal(&svd.vt);
            assert!(svd.sigma[0] >= svd.sigma[1] && svd.sigma[1] >= svd.sigma[2]);
            assert!(svd.sigma[2] >= 0.0);
        }
    }

    #[test]
    fn svd_handles_rank_deficient_and_zero() {
        let cases = [
            Mat3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [-1.0, -2.0, -3.0]]), // rank 1
            Mat3([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 0.0, 0.0]]),    // rank 2
            Mat3([[0.0; 3]; 3]),                                          // rank 0
        ];
        for m in cases {
            let svd = svd3(&m);
            assert!(reconstruction_error(&m, &svd) < 1e-10);
            assert_orthonormal(&svd.u);
            assert_orthonormal(&svd.vt);
        }
    }

    #[test]
    fn pseudo_solve_recovers_well_posed_system() {
        let a = Mat3([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]]);
        let x = Vec3::new(1.0, -2.0, 0.5);
        let b = a * x;
        let got = solve3_pseudo(&a, b);
        assert!((got - x).norm() < 1e-10);
    }

    #[test]
    fn inverse_round_trips() {
        let m = Mat3([[2.0, 1.0, 0.0], [0.0, 3.0, 1.0], [1.0, 0.0, 1.0]]);
        let inv = m.inverse().unwrap();
        let prod = m * inv;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.0[i][j] - want).abs() < 1e-12);
            }
        }
        assert!(Mat3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).inverse().is_none());
    }
}
