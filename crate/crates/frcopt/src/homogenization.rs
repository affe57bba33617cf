//! Mori-Tanaka effective stiffness of a two-phase spheroidal-inclusion
//! composite, rotation by fiber angles, plane-stress reduction and analytic
//! angle derivatives.
//!
//! Conventions used throughout:
//!
//! - Voigt order `(11, 22, 33, 23, 13, 12)` with engineering shear strains
//!   (factor 2), so a stiffness matrix maps `(e11, e22, e33, g23, g13, g12)`
//!   to `(s11, s22, s33, s23, s13, s12)`.
//! - The fiber axis in the local (material) frame is axis 1. The configured
//!   aspect ratio is interpreted as fiber length over diameter, i.e. `AR > 1`
//!   is a slender prolate inclusion.
//! - The rotation mapping the local frame into the global frame is
//!   `R = Rz(theta_xy) * Ry(-theta_z)`, which carries local axis 1 onto the
//!   fiber tangent.
//!
//! All functions are pure; evaluation per quadrature point is safe to run
//! concurrently.

use nalgebra::{Matrix3, Matrix6};
use thiserror::Error;

pub type Mat6 = Matrix6<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("Poisson ratio {0} outside (-1, 0.5)")]
    BadPoisson(f64),
    #[error("Young's modulus {0} must be positive")]
    BadModulus(f64),
    #[error("volume fraction {0} outside [0, 1]")]
    BadVolumeFraction(f64),
    #[error("aspect ratio {0} must be positive")]
    BadAspectRatio(f64),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
}

/// Constituent properties of the two-phase composite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseProperties {
    pub e_matrix: f64,
    pub e_fiber: f64,
    pub nu_matrix: f64,
    pub nu_fiber: f64,
    pub volume_fraction: f64,
    pub aspect_ratio: f64,
}

impl PhaseProperties {
    pub fn validate(&self) -> Result<(), MaterialError> {
        for nu in [self.nu_matrix, self.nu_fiber] {
            if !(-1.0 < nu && nu < 0.5) {
                return Err(MaterialError::BadPoisson(nu));
            }
        }
        for e in [self.e_matrix, self.e_fiber] {
            if !(e > 0.0) {
                return Err(MaterialError::BadModulus(e));
            }
        }
        if !(0.0..=1.0).contains(&self.volume_fraction) {
            return Err(MaterialError::BadVolumeFraction(self.volume_fraction));
        }
        if !(self.aspect_ratio > 0.0) {
            return Err(MaterialError::BadAspectRatio(self.aspect_ratio));
        }
        Ok(())
    }
}

/// Coordinate frame a stiffness matrix is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Fiber-aligned frame (fiber along axis 1).
    Local,
    /// Global problem frame.
    Global,
}

/// Stiffness matrix in Voigt form: 6x6 in 3D, 3x3 under plane stress
/// (acting on `(e11, e22, g12)`).
#[derive(Debug, Clone, PartialEq)]
pub enum StiffnessTensor {
    Full { voigt: Mat6, frame: Frame },
    PlaneStress { voigt: Mat3, frame: Frame },
}

impl StiffnessTensor {
    pub fn frame(&self) -> Frame {
        match self {
            StiffnessTensor::Full { frame, .. } => *frame,
            StiffnessTensor::PlaneStress { frame, .. } => *frame,
        }
    }

    pub fn full(&self) -> &Mat6 {
        match self {
            StiffnessTensor::Full { voigt, .. } => voigt,
            StiffnessTensor::PlaneStress { .. } => panic!("expected a 3D stiffness"),
        }
    }

    pub fn plane(&self) -> &Mat3 {
        match self {
            StiffnessTensor::PlaneStress { voigt, .. } => voigt,
            StiffnessTensor::Full { .. } => panic!("expected a plane-stress stiffness"),
        }
    }
}

/// Global-frame stiffness plus its derivatives with respect to the fiber
/// angles, for the adjoint chain rule.
#[derive(Debug, Clone)]
pub struct StiffnessWithDerivatives {
    pub stiffness: StiffnessTensor,
    pub d_theta_xy: StiffnessTensor,
    pub d_theta_z: StiffnessTensor,
}

/// Isotropic stiffness in 3D Voigt form (engineering shear).
pub fn isotropic_stiffness(e: f64, nu: f64) -> Mat6 {
    let lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    let mut c = Mat6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lam;
        }
        c[(i, i)] = lam + 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    c
}

/// Shape factor `g` of a spheroid with symmetry-axis aspect ratio `alpha`
/// (prolate for `alpha > 1`, oblate for `alpha < 1`).
fn spheroid_g(alpha: f64) -> f64 {
    if alpha > 1.0 {
        let a2 = alpha * alpha;
        alpha / (a2 - 1.0).powf(1.5) * (alpha * (a2 - 1.0).sqrt() - alpha.acosh())
    } else {
        let a2 = alpha * alpha;
        alpha / (1.0 - a2).powf(1.5) * (alpha.acos() - alpha * (1.0 - a2).sqrt())
    }
}

/// Eshelby tensor of a spheroidal inclusion (symmetry/fiber axis 1) in an
/// isotropic matrix, as a 6x6 strain-to-strain map in the engineering Voigt
/// basis. `ar` is the axis-1 semi-axis over the transverse semi-axis.
///
/// `ar == 1` (within 1e-8) uses the exact sphere expressions.
pub fn eshelby_tensor(nu_m: f64, ar: f64) -> Result<Mat6, MaterialError> {
    if !(-1.0 < nu_m && nu_m < 0.5) {
        return Err(MaterialError::BadPoisson(nu_m));
    }
    if !(ar > 0.0) {
        return Err(MaterialError::BadAspectRatio(ar));
    }
    let nu = nu_m;
    let mut s = Mat6::zeros();
    if (ar - 1.0).abs() < 1e-8 {
        // sphere
        let s_iiii = (7.0 - 5.0 * nu) / (15.0 * (1.0 - nu));
        let s_iijj = (5.0 * nu - 1.0) / (15.0 * (1.0 - nu));
        let s_ijij = (4.0 - 5.0 * nu) / (15.0 * (1.0 - nu));
        for i in 0..3 {
            for j in 0..3 {
                s[(i, j)] = if i == j { s_iiii } else { s_iijj };
            }
            // engineering shear rows carry 2*S_ijij
            s[(i + 3, i + 3)] = 2.0 * s_ijij;
        }
        return Ok(s);
    }
    let alpha = ar;
    let a2 = alpha * alpha;
    let q = a2 / (a2 - 1.0);
    let g = spheroid_g(alpha);
    let f = 1.0 / (1.0 - nu);

    let s1111 = 0.5 * f * (1.0 - 2.0 * nu + (3.0 * a2 - 1.0) / (a2 - 1.0) - (1.0 - 2.0 * nu + 3.0 * q) * g);
    let s2222 = 0.375 * f * q + 0.25 * f * (1.0 - 2.0 * nu - 2.25 / (a2 - 1.0)) * g;
    let s2233 = 0.25 * f * (0.5 * q - (1.0 - 2.0 * nu + 0.75 / (a2 - 1.0)) * g);
    let s2211 = -0.5 * f * q + 0.25 * f * (3.0 * q - (1.0 - 2.0 * nu)) * g;
    let s1122 = -0.5 * f * (1.0 - 2.0 * nu + 1.0 / (a2 - 1.0)) + 0.5 * f * (1.0 - 2.0 * nu + 1.5 / (a2 - 1.0)) * g;
    let s2323 = 0.25 * f * (0.5 * q + (1.0 - 2.0 * nu - 0.75 / (a2 - 1.0)) * g);
    let s1212 = 0.25
        * f
        * (1.0 - 2.0 * nu - (a2 + 1.0) / (a2 - 1.0) - 0.5 * (1.0 - 2.0 * nu - 3.0 * (a2 + 1.0) / (a2 - 1.0)) * g);

    s[(0, 0)] = s1111;
    s[(1, 1)] = s2222;
    s[(2, 2)] = s2222;
    s[(1, 2)] = s2233;
    s[(2, 1)] = s2233;
    s[(1, 0)] = s2211;
    s[(2, 0)] = s2211;
    s[(0, 1)] = s1122;
    s[(0, 2)] = s1122;
    // engineering shear rows: 2 * S_ijij
    s[(3, 3)] = 2.0 * s2323;
    s[(4, 4)] = 2.0 * s1212; // S_1313 = S_1212 for the spheroid
    s[(5, 5)] = 2.0 * s1212;
    Ok(s)
}

/// Mori-Tanaka effective stiffness in the local frame (fiber along axis 1).
pub fn mori_tanaka(props: &PhaseProperties) -> Result<StiffnessTensor, MaterialError> {
    props.validate()?;
    let cm = isotropic_stiffness(props.e_matrix, props.nu_matrix);
    let cf = isotropic_stiffness(props.e_fiber, props.nu_fiber);
    let vf = props.volume_fraction;
    let dc = cf - cm;
    let s = eshelby_tensor(props.nu_matrix, props.aspect_ratio)?;
    let cm_inv = cm.try_inverse().ok_or(MaterialError::Singular("matrix stiffness"))?;
    let a_dil = (Mat6::identity() + s * cm_inv * dc)
        .try_inverse()
        .ok_or(MaterialError::Singular("dilute concentration tensor"))?;
    let a_mt = a_dil
        * ((1.0 - vf) * Mat6::identity() + vf * a_dil)
            .try_inverse()
            .ok_or(MaterialError::Singular("Mori-Tanaka concentration tensor"))?;
    let c = cm + vf * dc * a_mt;
    // symmetrize to kill round-off; MT with aligned spheroids is symmetric
    let c = 0.5 * (c + c.transpose());
    Ok(StiffnessTensor::Full { voigt: c, frame: Frame::Local })
}

/// 3x3 rotation carrying the local (fiber) frame into the global frame:
/// columns are the local axes in global coordinates, `R e1 = t(theta)`.
pub fn rotation_matrix(theta_xy: f64, theta_z: f64) -> Mat3 {
    let (sx, cx) = theta_xy.sin_cos();
    let (sz, cz) = theta_z.sin_cos();
    // Rz(theta_xy) * Ry(-theta_z)
    Mat3::new(cx * cz, -sx, cx * sz, sx * cz, cx, sx * sz, -sz, 0.0, cz)
}

fn rotation_matrix_d_xy(theta_xy: f64, theta_z: f64) -> Mat3 {
    let (sx, cx) = theta_xy.sin_cos();
    let (sz, cz) = theta_z.sin_cos();
    Mat3::new(-sx * cz, -cx, -sx * sz, cx * cz, -sx, cx * sz, 0.0, 0.0, 0.0)
}

fn rotation_matrix_d_z(theta_xy: f64, theta_z: f64) -> Mat3 {
    let (sx, cx) = theta_xy.sin_cos();
    let (sz, cz) = theta_z.sin_cos();
    Mat3::new(-cx * sz, 0.0, cx * cz, -sx * sz, 0.0, sx * cz, -cz, 0.0, -sz)
}

/// 6x6 Bond stress-transformation matrix of a 3x3 rotation `r`
/// (`sigma_global = M sigma_local` in Voigt order (11,22,33,23,13,12)).
pub fn bond_stress_matrix(r: &Mat3) -> Mat6 {
    bond_bilinear(r, r)
}

/// Bilinear form underlying the Bond matrix; `bond_bilinear(r, r)` is the
/// Bond matrix and `bond_bilinear(dr, r) + bond_bilinear(r, dr)` its
/// derivative along `dr`.
fn bond_bilinear(a: &Mat3, b: &Mat3) -> Mat6 {
    const P: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
    let mut m = Mat6::zeros();
    for (row, &(i, j)) in P.iter().enumerate() {
        for (col, &(k, l)) in P.iter().enumerate() {
            let v = if k == l {
                a[(i, k)] * b[(j, k)]
            } else {
                a[(i, k)] * b[(j, l)] + a[(i, l)] * b[(j, k)]
            };
            m[(row, col)] = v;
        }
    }
    m
}

/// Rotates a local-frame stiffness to the global frame by the fiber angles.
pub fn rotate_stiffness(c_local: &StiffnessTensor, theta_xy: f64, theta_z: f64) -> StiffnessTensor {
    let c = c_local.full();
    let r = rotation_matrix(theta_xy, theta_z);
    let m = bond_stress_matrix(&r);
    let v = m * c * m.transpose();
    StiffnessTensor::Full { voigt: 0.5 * (v + v.transpose()), frame: Frame::Global }
}

/// Static condensation of the out-of-plane stress components
/// (`s33 = s23 = s13 = 0`), yielding the 3x3 plane-stress matrix on
/// `(e11, e22, g12)`.
pub fn plane_stress_reduce(c_global: &StiffnessTensor) -> Result<StiffnessTensor, MaterialError> {
    let c = c_global.full();
    let keep = [0usize, 1, 5];
    let cond = [2usize, 3, 4];
    let mut ckk = Mat3::zeros();
    let mut ckc = Mat3::zeros();
    let mut cck = Mat3::zeros();
    let mut ccc = Mat3::zeros();
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            ckk[(a, b)] = c[(i, j)];
        }
        for (b, &j) in cond.iter().enumerate() {
            ckc[(a, b)] = c[(i, j)];
        }
    }
    for (a, &i) in cond.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            cck[(a, b)] = c[(i, j)];
        }
        for (b, &j) in cond.iter().enumerate() {
            ccc[(a, b)] = c[(i, j)];
        }
    }
    let ccc_inv = ccc.try_inverse().ok_or(MaterialError::Singular("plane-stress condensation block"))?;
    let red = ckk - ckc * ccc_inv * cck;
    Ok(StiffnessTensor::PlaneStress { voigt: 0.5 * (red + red.transpose()), frame: c_global.frame() })
}

fn schur_derivative(c: &Mat6, dc: &Mat6) -> Result<Mat3, MaterialError> {
    let keep = [0usize, 1, 5];
    let cond = [2usize, 3, 4];
    let pick = |m: &Mat6, rows: &[usize; 3], cols: &[usize; 3]| {
        let mut out = Mat3::zeros();
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = m[(i, j)];
            }
        }
        out
    };
    let ccc_inv = pick(c, &cond, &cond)
        .try_inverse()
        .ok_or(MaterialError::Singular("plane-stress condensation block"))?;
    let y = ccc_inv * pick(c, &cond, &keep); // C_cc^-1 C_ck
    let d = pick(dc, &keep, &keep) - pick(dc, &keep, &cond) * y - y.transpose() * pick(dc, &cond, &keep)
        + y.transpose() * pick(dc, &cond, &cond) * y;
    Ok(d)
}

/// Global-frame stiffness and its analytic derivatives with respect to both
/// fiber angles. With `reduce`, all three matrices are plane-stress reduced
/// and the `theta_z` derivative is identically zero (the reduced in-plane
/// tensor is even in `theta_z` around zero).
pub fn stiffness_with_derivatives(
    props: &PhaseProperties,
    theta_xy: f64,
    theta_z: f64,
    reduce: bool,
) -> Result<StiffnessWithDerivatives, MaterialError> {
    let c_local = mori_tanaka(props)?;
    stiffness_with_derivatives_from_local(&c_local, theta_xy, theta_z, reduce)
}

/// Same as [`stiffness_with_derivatives`] but reusing a precomputed local
/// Mori-Tanaka stiffness.
pub fn stiffness_with_derivatives_from_local(
    c_local: &StiffnessTensor,
    theta_xy: f64,
    theta_z: f64,
    reduce: bool,
) -> Result<StiffnessWithDerivatives, MaterialError> {
    let c = c_local.full();
    let r = rotation_matrix(theta_xy, theta_z);
    let m = bond_stress_matrix(&r);
    let c_g = m * c * m.transpose();
    let dm_xy = {
        let dr = rotation_matrix_d_xy(theta_xy, theta_z);
        bond_bilinear(&dr, &r) + bond_bilinear(&r, &dr)
    };
    let dm_z = {
        let dr = rotation_matrix_d_z(theta_xy, theta_z);
        bond_bilinear(&dr, &r) + bond_bilinear(&r, &dr)
    };
    let dc_xy = dm_xy * c * m.transpose() + m * c * dm_xy.transpose();
    let dc_z = dm_z * c * m.transpose() + m * c * dm_z.transpose();
    let sym6 = |v: Mat6| 0.5 * (v + v.transpose());
    if reduce {
        let cg = sym6(c_g);
        let red = plane_stress_reduce(&StiffnessTensor::Full { voigt: cg, frame: Frame::Global })?;
        let dxy = schur_derivative(&cg, &sym6(dc_xy))?;
        Ok(StiffnessWithDerivatives {
            stiffness: red,
            d_theta_xy: StiffnessTensor::PlaneStress { voigt: dxy, frame: Frame::Global },
            d_theta_z: StiffnessTensor::PlaneStress { voigt: Mat3::zeros(), frame: Frame::Global },
        })
    } else {
        Ok(StiffnessWithDerivatives {
            stiffness: StiffnessTensor::Full { voigt: sym6(c_g), frame: Frame::Global },
            d_theta_xy: StiffnessTensor::Full { voigt: sym6(dc_xy), frame: Frame::Global },
            d_theta_z: StiffnessTensor::Full { voigt: sym6(dc_z), frame: Frame::Global },
        })
    }
}

/// Scalar effective Young's modulus: Young's modulus of the isotropized
/// (orientation-averaged, Voigt mean) tensor. Used to scale the Nitsche
/// penalty and the elastic bedding.
pub fn effective_young_modulus(c: &StiffnessTensor) -> f64 {
    let m = c.full();
    // full contractions C_iijj and C_ijij from the engineering Voigt matrix
    let mut a = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            a += m[(i, j)];
        }
    }
    let b = m[(0, 0)] + m[(1, 1)] + m[(2, 2)] + 2.0 * (m[(3, 3)] + m[(4, 4)] + m[(5, 5)]);
    let k = a / 9.0;
    let mu = (3.0 * b - a) / 30.0;
    9.0 * k * mu / (3.0 * k + mu)
}

/// Plane-stress stiffness rotated in-plane, with the local reduced matrix
/// precomputed once. This is the fast path used per quadrature point by the
/// 2D mechanics backends.
#[derive(Debug, Clone)]
pub struct PlaneRotatedStiffness {
    c_local: Mat3,
}

impl PlaneRotatedStiffness {
    /// Builds the reduced local matrix from the local-frame Mori-Tanaka
    /// stiffness (plane-stress reduction commutes with in-plane rotation).
    pub fn new(c_local_3d: &StiffnessTensor) -> Result<Self, MaterialError> {
        let red = plane_stress_reduce(c_local_3d)?;
        Ok(Self { c_local: *red.plane() })
    }

    pub fn from_props(props: &PhaseProperties) -> Result<Self, MaterialError> {
        Self::new(&mori_tanaka(props)?)
    }

    pub fn local(&self) -> &Mat3 {
        &self.c_local
    }

    /// In-plane Bond stress matrix for Voigt order (11, 22, 12).
    fn bond2(c: f64, s: f64) -> Mat3 {
        Mat3::new(c * c, s * s, -2.0 * c * s, s * s, c * c, 2.0 * c * s, c * s, -c * s, c * c - s * s)
    }

    /// Global stiffness at in-plane angle `theta`.
    pub fn at(&self, theta: f64) -> Mat3 {
        let (s, c) = theta.sin_cos();
        let m = Self::bond2(c, s);
        let v = m * self.c_local * m.transpose();
        0.5 * (v + v.transpose())
    }

    /// Global stiffness and its `d/d theta` at in-plane angle `theta`.
    pub fn at_with_derivative(&self, theta: f64) -> (Mat3, Mat3) {
        let (s, c) = theta.sin_cos();
        let m = Self::bond2(c, s);
        // d/dtheta of bond2 with c' = -s, s' = c
        let dm = Mat3::new(
            -2.0 * c * s,
            2.0 * s * c,
            -2.0 * (c * c - s * s),
            2.0 * s * c,
            -2.0 * c * s,
            2.0 * (c * c - s * s),
            c * c - s * s,
            -(c * c - s * s),
            -4.0 * c * s,
        );
        let v = m * self.c_local * m.transpose();
        let dv = dm * self.c_local * m.transpose() + m * self.c_local * dm.transpose();
        (0.5 * (v + v.transpose()), 0.5 * (dv + dv.transpose()))
    }
}

/// Axial Young's modulus along Voigt axis `i` (0..3) of a 3D stiffness:
/// `1 / (C^-1)_{ii}`.
pub fn axial_young_modulus(c: &StiffnessTensor, i: usize) -> Result<f64, MaterialError> {
    let inv = c.full().try_inverse().ok_or(MaterialError::Singular("stiffness inverse"))?;
    Ok(1.0 / inv[(i, i)])
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Numerical Hill-polarization oracle for the Eshelby tensor, independent
    //! of the closed-form expressions: P = (a1 a2 a3 / 4 pi) * integral over
    //! the unit sphere of sym(K^-1_ik(n) n_j n_l) / rho(n)^3, with S = P : C_m.

    use super::*;

    fn acoustic_tensor(c: &[[[[f64; 3]; 3]; 3]; 3], n: &[f64; 3]) -> Mat3 {
        let mut k = Mat3::zeros();
        for i in 0..3 {
            for kk in 0..3 {
                let mut v = 0.0;
                for j in 0..3 {
                    for l in 0..3 {
                        v += c[i][j][kk][l] * n[j] * n[l];
                    }
                }
                k[(i, kk)] = v;
            }
        }
        k
    }

    fn isotropic_c4(e: f64, nu: f64) -> [[[[f64; 3]; 3]; 3]; 3] {
        let lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut c = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        c[i][j][k][l] = lam * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                    }
                }
            }
        }
        c
    }

    /// Numerical Eshelby tensor for a spheroid with semi-axes `(ar, 1, 1)`
    /// (fiber axis 1) in an isotropic matrix, in the same engineering Voigt
    /// strain-to-strain representation as [`eshelby_tensor`].
    pub fn eshelby_numeric(nu_m: f64, ar: f64, n_theta: usize, n_phi: usize) -> Mat6 {
        let semi = [ar, 1.0, 1.0];
        let c4 = isotropic_c4(1.0, nu_m);
        let mut p = [[[[0.0f64; 3]; 3]; 3]; 3];
        let (nodes, weights) = gauss_legendre(n_theta);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        for (ct, wt) in nodes.iter().zip(weights.iter()) {
            let st = (1.0 - ct * ct).sqrt();
            for ip in 0..n_phi {
                let phi = (ip as f64 + 0.5) * dphi;
                let n = [st * phi.cos(), st * phi.sin(), *ct];
                let rho2: f64 = (0..3).map(|d| semi[d] * semi[d] * n[d] * n[d]).sum();
                let w = wt * dphi / rho2.powf(1.5);
                let kinv = acoustic_tensor(&c4, &n).try_inverse().unwrap();
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            for l in 0..3 {
                                let v = 0.25
                                    * (kinv[(i, k)] * n[j] * n[l]
                                        + kinv[(j, k)] * n[i] * n[l]
                                        + kinv[(i, l)] * n[j] * n[k]
                                        + kinv[(j, l)] * n[i] * n[k]);
                                p[i][j][k][l] += w * v;
                            }
                        }
                    }
                }
            }
        }
        let det = semi[0] * semi[1] * semi[2];
        let scale = det / (4.0 * std::f64::consts::PI);
        for row in p.iter_mut() {
            for col in row.iter_mut() {
                for kk in col.iter_mut() {
                    for v in kk.iter_mut() {
                        *v *= scale;
                    }
                }
            }
        }
        // engineering Voigt of the stress-to-strain map P, then S = P * C_m
        const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
        let mut p_m = Mat6::zeros();
        for (row, &(i, j)) in PAIRS.iter().enumerate() {
            let pre = if i == j { 1.0 } else { 2.0 };
            for (col, &(k, l)) in PAIRS.iter().enumerate() {
                let merge = if k == l { 1.0 } else { 2.0 };
                p_m[(row, col)] = pre * merge * p[i][j][k][l];
            }
        }
        p_m * isotropic_stiffness(1.0, nu_m)
    }

    fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, t);
                let dt = -p / dp;
                t += dt;
                if dt.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre(n, t);
            x[i] = t;
            w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
        (x, w)
    }

    fn legendre(n: usize, x: f64) -> (f64, f64) {
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    }
}
