//! Subspace geometry between temporal-mode sets.
//!
//! Two mode sets span subspaces of `ℂⁿ`. Their principal angles come from
//! orthonormalizing each basis (QR) and taking the SVD of `Q₁ᴴ Q₂`; the
//! singular values are the cosines. Small angles are recovered from the
//! sines instead (singular values of `Q₂ − Q₁ Q₁ᴴ Q₂`), since `acos` loses
//! half the significant digits near 1.
//!
//! On top of the angles sit two distances:
//!
//! * projection distance `‖sin Θ‖_F`, the per-pair cost of the metric;
//! * arc-length distance `‖Θ‖_F`, the length of the geodesic
//!   `γ(t) = A cos(tΘ) + Δ sin(tΘ)` built by [`GeodesicPath`].

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::dmd::TemporalModes;
use crate::error::{invalid, Result};
use crate::numerics::{self, CMatrix};

/// Angles at or below this are treated as exactly aligned directions.
pub const ZERO_ANGLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles {
    /// Nondecreasing, each in `[0, π/2]`.
    pub thetas: Vec<f64>,
    /// Singular values of `Q₁ᴴ Q₂`, clamped into `[0, 1]`.
    pub cosines: Vec<f64>,
}

impl PrincipalAngles {
    pub fn from_thetas(thetas: Vec<f64>) -> Self {
        let cosines = thetas.iter().map(|t| t.cos()).collect();
        Self { thetas, cosines }
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Orthonormal basis of a mode subspace, computed once and reused.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    q: CMatrix,
}

impl OrthonormalBasis {
    pub fn from_modes(m: &TemporalModes) -> Result<Self> {
        Self::from_matrix(&m.basis)
    }

    pub fn from_matrix(basis: &CMatrix) -> Result<Self> {
        if basis.ncols() == 0 {
            return Err(invalid("cannot orthonormalize an empty basis"));
        }
        Ok(Self {
            q: numerics::qr_orthonormal(basis)?.q,
        })
    }

    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.q.nrows()
    }
}

pub fn principal_angles(m1: &TemporalModes, m2: &TemporalModes) -> Result<PrincipalAngles> {
    check_ambient(m1.ambient_dim(), m2.ambient_dim())?;
    if m1.k() == 0 || m2.k() == 0 {
        return Err(invalid("principal angles need nonempty mode sets"));
    }
    principal_angles_between(&OrthonormalBasis::from_modes(m1)?, &OrthonormalBasis::from_modes(m2)?)
}

fn check_ambient(n1: usize, n2: usize) -> Result<()> {
    if n1 != n2 {
        return Err(invalid(format!("ambient dimension mismatch: {n1} vs {n2}")));
    }
    Ok(())
}

pub fn principal_angles_between(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<PrincipalAngles> {
    check_ambient(a.ambient_dim(), b.ambient_dim())?;
    // Put the smaller subspace second so its residual carries all s sines.
    let (big, small) = if a.dim() >= b.dim() { (a, b) } else { (b, a) };
    let cross = big.q.adjoint() * &small.q;
    let cos_raw = numerics::singular_values(&cross)?;
    let residual = &small.q - &big.q * &cross;
    let mut sin_raw = numerics::singular_values(&residual)?;
    sin_raw.reverse();

    let s = small.dim();
    let mut thetas = Vec::with_capacity(s);
    let mut cosines = Vec::with_capacity(s);
    for i in 0..s {
        let cos = cos_raw[i].clamp(0.0, 1.0);
        let sin = sin_raw[i].clamp(0.0, 1.0);
        let theta = if cos * cos >= 0.5 { sin.asin() } else { cos.acos() };
        thetas.push(theta.clamp(0.0, FRAC_PI_2));
        cosines.push(cos);
    }
    // Both branches are monotone but a switch between them can swap
    // neighbours by an ulp.
    thetas.sort_by(|x, y| x.partial_cmp(y).expect("finite angles"));
    Ok(PrincipalAngles { thetas, cosines })
}

/// `‖sin Θ‖_F`.
pub fn projection_distance(a: &PrincipalAngles) -> f64 {
    a.thetas.iter().map(|t| t.sin().powi(2)).sum::<f64>().sqrt()
}

/// `(s − Σ cos²θ)^{1/2}`, the cosine form of [`projection_distance`].
pub fn projection_distance_cosine_form(a: &PrincipalAngles) -> f64 {
    let s = a.thetas.len() as f64;
    let sum: f64 = a.thetas.iter().map(|t| t.cos().powi(2)).sum();
    (s - sum).max(0.0).sqrt()
}

/// `‖Θ‖_F`, the geodesic length between the two subspaces.
pub fn arc_length_distance(a: &PrincipalAngles) -> f64 {
    a.thetas.iter().map(|t| t * t).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[default]
    Projection,
    ArcLength,
}

impl DistanceKind {
    pub fn eval(self, a: &PrincipalAngles) -> f64 {
        match self {
            DistanceKind::Projection => projection_distance(a),
            DistanceKind::ArcLength => arc_length_distance(a),
        }
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "projection" => Ok(DistanceKind::Projection),
            "arc_length" | "arc-length" => Ok(DistanceKind::ArcLength),
            other => Err(format!("unknown distance `{other}` (projection | arc-length)")),
        }
    }
}

/// Field over which mode subspaces are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceField {
    /// Complex eigenvectors with conjugate-transpose inner products.
    #[default]
    Complex,
    /// Each eigenvector stacked as the real vector `[Re φ; Im φ]`.
    Realified,
}

impl SubspaceField {
    pub fn prepare(self, m: &TemporalModes) -> TemporalModes {
        match self {
            SubspaceField::Complex => m.clone(),
            SubspaceField::Realified => m.realified(),
        }
    }
}

impl std::str::FromStr for SubspaceField {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "complex" => Ok(SubspaceField::Complex),
            "realified" => Ok(SubspaceField::Realified),
            other => Err(format!("unknown subspace field `{other}` (complex | realified)")),
        }
    }
}

/// Geodesic between two equal-dimension subspaces.
///
/// `base` and `target` are the principal-vector bases `A = Q₁U`, `B = Q₂V`
/// (so `Aᴴ B = cos Θ`), and `delta` holds `(B − A cos Θ) sin(Θ)⁻¹` for the
/// directions with a nonzero angle.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub base: CMatrix,
    pub target: CMatrix,
    pub delta: CMatrix,
    pub thetas: Vec<f64>,
    moving: Vec<usize>,
}

impl GeodesicPath {
    pub fn new(m1: &TemporalModes, m2: &TemporalModes) -> Result<Self> {
        check_ambient(m1.ambient_dim(), m2.ambient_dim())?;
        let q1 = OrthonormalBasis::from_modes(m1)?;
        let q2 = OrthonormalBasis::from_modes(m2)?;
        if q1.dim() != q2.dim() {
            return Err(invalid(format!(
                "geodesic needs equal subspace dimensions, got {} and {}",
                q1.dim(),
                q2.dim()
            )));
        }
        let k = q1.dim();
        let cross = q1.q.adjoint() * &q2.q;
        let svd = numerics::thin_svd(&cross)?;
        let base = &q1.q * &svd.u;
        let target = &q2.q * &svd.v;

        let mut thetas = Vec::with_capacity(k);
        let mut moving = Vec::new();
        let mut delta_cols = Vec::new();
        for i in 0..k {
            let cos = svd.sigma[i].clamp(0.0, 1.0);
            let residual = target.column(i) - base.column(i) * numerics::c(cos, 0.0);
            let sin = residual.norm();
            let theta = sin.atan2(cos);
            thetas.push(theta);
            if theta > ZERO_ANGLE_TOL {
                moving.push(i);
                delta_cols.push(residual.unscale(sin));
            }
        }
        let mut delta = CMatrix::zeros(base.nrows(), delta_cols.len());
        for (j, col) in delta_cols.iter().enumerate() {
            delta.set_column(j, col);
        }
        Ok(Self {
            base,
            target,
            delta,
            thetas,
            moving,
        })
    }

    /// `γ(t)`, an n×k matrix with orthonormal columns.
    pub fn at(&self, t: f64) -> CMatrix {
        let mut out = self.base.clone();
        for (j, &i) in self.moving.iter().enumerate() {
            let (s, c) = (t * self.thetas[i]).sin_cos();
            let col = self.base.column(i) * numerics::c(c, 0.0) + self.delta.column(j) * numerics::c(s, 0.0);
            out.set_column(i, &col);
        }
        out
    }

    pub fn length(&self) -> f64 {
        self.thetas.iter().map(|t| t * t).sum::<f64>().sqrt()
    }
}

pub fn geodesic(m1: &TemporalModes, m2: &TemporalModes, t: f64) -> Result<CMatrix> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("geodesic parameter {t} outside [0, 1]")));
    }
    Ok(GeodesicPath::new(m1, m2)?.at(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub(crate) fn modes(basis: CMatrix) -> TemporalModes {
        let k = basis.ncols();
        TemporalModes {
            basis,
            eigenvalues: vec![c(1.0, 0.0); k],
            source_id: "t".into(),
            requested_k: k,
            clipped: false,
        }
    }

    fn real_cols(n: usize, cols: &[&[f64]]) -> TemporalModes {
        let mut m = CMatrix::zeros(n, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = c(*v, 0.0);
            }
        }
        modes(m)
    }

    fn random_basis(rng: &mut ChaCha8Rng, n: usize, k: usize) -> CMatrix {
        CMatrix::from_fn(n, k, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_unitary(rng: &mut ChaCha8Rng, k: usize) -> CMatrix {
        numerics::qr_orthonormal(&random_basis(rng, k, k)).unwrap().q
    }

    fn projector(m: &CMatrix) -> CMatrix {
        let q = numerics::qr_orthonormal(m).unwrap().q;
        &q * q.adjoint()
    }

    #[test]
    fn identical_subspaces() {
        let m = real_cols(3, &[&[1.0, 2.0, 0.0], &[0.0, 1.0, 1.0]]);
        let a = principal_angles(&m, &m).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.thetas.iter().all(|t| *t < 1e-12));
    }

    #[test]
    fn orthogonal_lines() {
        let a = principal_angles(&real_cols(3, &[&[1.0, 0.0, 0.0]]), &real_cols(3, &[&[0.0, 1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(a.thetas[0], PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(projection_distance(&a), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(arc_length_distance(&a), PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn planar_rotation_angle() {
        let alpha = PI / 6.0;
        let a = principal_angles(
            &real_cols(3, &[&[1.0, 0.0, 0.0]]),
            &real_cols(3, &[&[alpha.cos(), alpha.sin(), 0.0]]),
        )
        .unwrap();
        assert_abs_diff_eq!(a.thetas[0], alpha, epsilon = 1e-12);
        assert!((a.cosines[0] - a.thetas[0].cos()).abs() < 1e-12);
    }

    #[test]
    fn tiny_angles_resolved() {
        let alpha: f64 = 1e-9;
        let a = principal_angles(
            &real_cols(2, &[&[1.0, 0.0]]),
            &real_cols(2, &[&[alpha.cos(), alpha.sin()]]),
        )
        .unwrap();
        assert!((a.thetas[0] - alpha).abs() < 1e-20);
    }

    #[test]
    fn unequal_dimensions_use_min() {
        let plane = real_cols(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let line = real_cols(3, &[&[0.0, 0.0, 1.0]]);
        let a = principal_angles(&plane, &line).unwrap();
        assert_eq!(a.len(), 1);
        assert_abs_diff_eq!(a.thetas[0], PI / 2.0, epsilon = 1e-15);
        let b = principal_angles(&line, &plane).unwrap();
        assert_eq!(a.thetas, b.thetas);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let e = principal_angles(&real_cols(2, &[&[1.0, 0.0]]), &real_cols(3, &[&[1.0, 0.0, 0.0]]));
        assert!(e.is_err());
    }

    #[test]
    fn distances_on_hand_angles() {
        let z = PrincipalAngles::from_thetas(vec![0.0, 0.0]);
        assert_eq!(projection_distance(&z), 0.0);
        assert_eq!(arc_length_distance(&z), 0.0);
        let a = PrincipalAngles::from_thetas(vec![PI / 6.0, PI / 3.0]);
        assert_abs_diff_eq!(projection_distance(&a), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(arc_length_distance(&a), PI * 5f64.sqrt() / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(projection_distance_cosine_form(&a), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn complex_phase_is_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b1 = random_basis(&mut rng, 5, 2);
        let b2 = random_basis(&mut rng, 5, 2);
        let base = principal_angles(&modes(b1.clone()), &modes(b2.clone())).unwrap();
        let mut rotated = b1.clone();
        let phase = Complex64::from_polar(1.0, 1.234);
        for z in rotated.column_mut(1).iter_mut() {
            *z *= phase;
        }
        let after = principal_angles(&modes(rotated), &modes(b2)).unwrap();
        for (x, y) in base.thetas.iter().zip(&after.thetas) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn geodesic_endpoints_and_midpoint() {
        let e1 = real_cols(3, &[&[1.0, 0.0, 0.0]]);
        let e2 = real_cols(3, &[&[0.0, 1.0, 0.0]]);
        let g0 = geodesic(&e1, &e2, 0.0).unwrap();
        let g1 = geodesic(&e1, &e2, 1.0).unwrap();
        let gm = geodesic(&e1, &e2, 0.5).unwrap();
        let a0 = principal_angles(&modes(g0), &e1).unwrap();
        let a1 = principal_angles(&modes(g1), &e2).unwrap();
        assert!(a0.thetas[0] < 1e-8 && a1.thetas[0] < 1e-8);
        let mid = real_cols(3, &[&[1.0, 1.0, 0.0]]);
        assert!(principal_angles(&modes(gm), &mid).unwrap().thetas[0] < 1e-8);
        assert!(geodesic(&e1, &e2, 1.5).is_err());
    }

    #[test]
    fn geodesic_requires_equal_dims() {
        let plane = real_cols(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let line = real_cols(3, &[&[0.0, 0.0, 1.0]]);
        assert!(GeodesicPath::new(&plane, &line).is_err());
    }

    #[test]
    fn geodesic_factors_orthonormal_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m1 = modes(random_basis(&mut rng, 6, 3));
            let m2 = modes(random_basis(&mut rng, 6, 3));
            let path = GeodesicPath::new(&m1, &m2).unwrap();
            let k = path.delta.ncols();
            assert!((path.base.adjoint() * &path.base - CMatrix::identity(3, 3)).norm() < 1e-10);
            assert!((path.delta.adjoint() * &path.delta - CMatrix::identity(k, k)).norm() < 1e-10);
            assert!((path.base.adjoint() * &path.delta).norm() < 1e-10);
            for t in [0.0, 0.3, 0.7, 1.0] {
                let g = path.at(t);
                assert!((g.adjoint() * &g - CMatrix::identity(3, 3)).norm() < 1e-10);
            }
            let angles = principal_angles(&m1, &m2).unwrap();
            assert_abs_diff_eq!(path.length(), arc_length_distance(&angles), epsilon = 1e-10);
        }
    }

    #[test]
    fn geodesic_keeps_shared_directions() {
        // Planes sharing e1; the second direction rotates by π/4.
        let s = (PI / 4.0).sin();
        let m1 = real_cols(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let m2 = real_cols(3, &[&[1.0, 0.0, 0.0], &[0.0, s, s]]);
        let path = GeodesicPath::new(&m1, &m2).unwrap();
        assert_eq!(path.delta.ncols(), 1);
        let g = path.at(1.0);
        assert!(principal_angles(&modes(g), &m2)
            .unwrap()
            .thetas
            .iter()
            .all(|t| *t < 1e-8));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn symmetric_and_basis_invariant(seed in any::<u64>(), n in 3usize..7, k1 in 1usize..3, k2 in 1usize..3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let b1 = random_basis(&mut rng, n, k1);
                let b2 = random_basis(&mut rng, n, k2);
                let ab = principal_angles(&modes(b1.clone()), &modes(b2.clone())).unwrap();
                let ba = principal_angles(&modes(b2.clone()), &modes(b1.clone())).unwrap();
                prop_assert_eq!(ab.len(), k1.min(k2));
                for (x, y) in ab.thetas.iter().zip(&ba.thetas) {
                    prop_assert!((x - y).abs() < 1e-10);
                }
                let mixed = &b1 * random_unitary(&mut rng, k1);
                let again = principal_angles(&modes(mixed), &modes(b2)).unwrap();
                for (x, y) in ab.thetas.iter().zip(&again.thetas) {
                    prop_assert!((x - y).abs() < 1e-10);
                }
                prop_assert!(ab.thetas.windows(2).all(|w| w[0] <= w[1]));
                for (t, cos) in ab.thetas.iter().zip(&ab.cosines) {
                    prop_assert!((t.cos() - cos).abs() < 1e-12);
                }
            }

            #[test]
            fn distance_bounds(seed in any::<u64>(), n in 2usize..7, k in 1usize..3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let k = k.min(n);
                let a = principal_angles(&modes(random_basis(&mut rng, n, k)), &modes(random_basis(&mut rng, n, k))).unwrap();
                let s = a.len() as f64;
                let proj = projection_distance(&a);
                let arc = arc_length_distance(&a);
                prop_assert!(proj <= arc + 1e-15);
                prop_assert!(proj <= s.sqrt() + 1e-12);
                prop_assert!(arc <= FRAC_PI_2 * s.sqrt() + 1e-12);
            }

            #[test]
            fn zero_iff_equal(seed in any::<u64>(), n in 3usize..7, equal in any::<bool>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let b1 = random_basis(&mut rng, n, 2);
                let b2 = if equal { &b1 * random_unitary(&mut rng, 2) } else { random_basis(&mut rng, n, 2) };
                let a = principal_angles(&modes(b1.clone()), &modes(b2.clone())).unwrap();
                let same = (projector(&b1) - projector(&b2)).norm() < 1e-8;
                prop_assert_eq!(projection_distance(&a) < 1e-8, same);
                prop_assert_eq!(arc_length_distance(&a) < 1e-8, same);
            }
        }
    }

    #[test]
    fn geodesic_constant_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let m1 = modes(random_basis(&mut rng, 5, 2));
        let m2 = modes(random_basis(&mut rng, 5, 2));
        let path = GeodesicPath::new(&m1, &m2).unwrap();
        let pts: Vec<CMatrix> = (0..11).map(|i| path.at(i as f64 / 10.0)).collect();
        let chords: Vec<f64> = pts.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
        let max = chords.iter().copied().fold(f64::MIN, f64::max);
        let min = chords.iter().copied().fold(f64::MAX, f64::min);
        assert!((max - min) / max < 1e-6);
        let fine: f64 = (0..100)
            .map(|i| (path.at((i + 1) as f64 / 100.0) - path.at(i as f64 / 100.0)).norm())
            .sum();
        let arc = arc_length_distance(&principal_angles(&m1, &m2).unwrap());
        assert!((fine - arc).abs() / arc < 0.01);
    }
}
