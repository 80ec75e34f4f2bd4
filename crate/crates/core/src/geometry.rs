//! Metric structure of canonicalized networks.
//!
//! Continuous networks live on a product of spheres: one unit sphere per
//! hidden unit and one sphere of radius `√H^L` for the whole last layer.
//! Geodesics are taken independently on every sphere with a common fraction
//! `x`. Binary networks use the Hamming metric instead.

use alloc::vec::Vec;

use libm::{atan2, cos, sin, sqrt, tan};
use ndarray::{ArrayView1, ArrayViewMut1};
use rand::seq::SliceRandom;

use crate::nn::{Network, NnError};
use crate::rng;
use crate::symmetry::last_layer_radius;

/// Angles below this are treated as identical directions.
pub const MIN_ANGLE: f64 = 1e-7;
/// Angles within this of `π` are rejected as antipodal.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;
/// Fractions below this use the `x → 0` limit of the interpolant.
pub const MIN_FRACTION: f64 = 1e-9;
/// Allowed deviation of a vector norm from its sphere radius (relative to
/// `max(1, n)`).
pub const RADIUS_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("vector of norm {norm} is not on the sphere of radius {radius}")]
    OffSphere { norm: f64, radius: f64 },
    #[error("vectors have different lengths")]
    LengthMismatch,
    #[error("antipodal endpoints: the geodesic is not unique")]
    Antipodal,
    #[error("antipodal endpoints at layer {layer}{}", unit.map(|u| alloc::format!(", unit {u}")).unwrap_or_default())]
    AntipodalUnit { layer: usize, unit: Option<usize> },
    #[error("layer {layer}{}: {source}", unit.map(|u| alloc::format!(", unit {u}")).unwrap_or_default())]
    Sphere {
        layer: usize,
        unit: Option<usize>,
        source: alloc::boxed::Box<GeometryError>,
    },
    #[error("networks have different architectures")]
    ArchitectureMismatch,
    #[error("operation needs binary networks")]
    NotBinary,
    #[error("operation needs continuous networks")]
    NotContinuous,
    #[error("fraction {0} is outside [0, 1]")]
    BadFraction(f64),
}

fn norm(u: ArrayView1<f32>) -> f64 {
    sqrt(u.iter().map(|&v| v as f64 * v as f64).sum())
}

fn check_radius(u: ArrayView1<f32>, n: f64) -> Result<(), GeometryError> {
    let got = norm(u);
    if (got - n).abs() > RADIUS_TOLERANCE * n.max(1.0) {
        return Err(GeometryError::OffSphere { norm: got, radius: n });
    }
    Ok(())
}

/// Angle between `u` and `v`, both on the sphere of radius `n`.
pub fn sphere_angle(u: ArrayView1<f32>, v: ArrayView1<f32>, n: f64) -> Result<f64, GeometryError> {
    if u.len() != v.len() {
        return Err(GeometryError::LengthMismatch);
    }
    check_radius(u, n)?;
    check_radius(v, n)?;
    Ok(angle_unchecked(u, v, n))
}

fn angle_unchecked(u: ArrayView1<f32>, v: ArrayView1<f32>, _n: f64) -> f64 {
    // 2 atan2(|û - v̂|, |û + v̂|): same value as arccos(û·v̂) but accurate
    // for nearly parallel or antiparallel vectors.
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return core::f64::consts::FRAC_PI_2;
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64 / nu, b as f64 / nv);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * atan2(sqrt(diff), sqrt(sum))
}

/// Interpolation weight `t(x) = (1 − cos φ + sin φ / tan(φ x))⁻¹`.
fn interpolant(phi: f64, x: f64) -> f64 {
    if x < MIN_FRACTION {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    1.0 / (1.0 - cos(phi) + sin(phi) / tan(phi * x))
}

/// Writes the point at fraction `x` of the geodesic from `u` to `v` (on the
/// sphere of radius `n`) into `out`: `n · normalize(u + t(x)(v − u))`.
fn geodesic_into(
    u: ArrayView1<f32>,
    v: ArrayView1<f32>,
    n: f64,
    x: f64,
    mut out: ArrayViewMut1<f32>,
) -> Result<(), GeometryError> {
    let phi = sphere_angle(u, v, n)?;
    if phi > core::f64::consts::PI - ANTIPODAL_MARGIN {
        return Err(GeometryError::Antipodal);
    }
    if phi < MIN_ANGLE || x < MIN_FRACTION {
        out.assign(&u);
        return Ok(());
    }
    if x >= 1.0 {
        out.assign(&v);
        return Ok(());
    }
    let t = interpolant(phi, x);
    let p: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| a as f64 + t * (b as f64 - a as f64))
        .collect();
    let len = sqrt(p.iter().map(|c| c * c).sum());
    for (o, c) in out.iter_mut().zip(p) {
        *o = (n * c / len) as f32;
    }
    Ok(())
}

/// Point at fraction `x ∈ [0, 1]` of the great-circle arc from `u` to `v`.
pub fn sphere_geodesic_point(
    u: ArrayView1<f32>,
    v: ArrayView1<f32>,
    n: f64,
    x: f64,
) -> Result<ndarray::Array1<f32>, GeometryError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(GeometryError::BadFraction(x));
    }
    if u.len() != v.len() {
        return Err(GeometryError::LengthMismatch);
    }
    let mut out = ndarray::Array1::zeros(u.len());
    geodesic_into(u, v, n, x, out.view_mut())?;
    Ok(out)
}

fn check_continuous_pair(a: &Network, b: &Network) -> Result<(), GeometryError> {
    if !a.same_architecture(b) {
        return Err(GeometryError::ArchitectureMismatch);
    }
    if a.is_binary() {
        return Err(GeometryError::NotContinuous);
    }
    Ok(())
}

fn wrap(layer: usize, unit: Option<usize>, e: GeometryError) -> GeometryError {
    match e {
        GeometryError::Antipodal => GeometryError::AntipodalUnit { layer, unit },
        other => GeometryError::Sphere {
            layer,
            unit,
            source: alloc::boxed::Box::new(other),
        },
    }
}

/// Network at fraction `x` of the geodesic between two normalized and
/// aligned networks. Biases, if any, are interpolated linearly.
pub fn network_geodesic(a: &Network, b: &Network, x: f64) -> Result<Network, GeometryError> {
    check_continuous_pair(a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(GeometryError::BadFraction(x));
    }
    let mut out = a.clone();
    let last = a.layers().len() - 1;
    let radius = last_layer_radius(a);
    for (li, layer) in out.layers_mut().iter_mut().enumerate() {
        let la = &a.layers()[li];
        let lb = &b.layers()[li];
        if li < last {
            for (k, row) in layer.weights.rows_mut().into_iter().enumerate() {
                geodesic_into(la.weights.row(k), lb.weights.row(k), 1.0, x, row)
                    .map_err(|e| wrap(li, Some(k), e))?;
            }
        } else {
            // Logical (row-major) order, whatever the memory layout.
            let wa = la.weights.flatten();
            let wb = lb.weights.flatten();
            let mut flat = ndarray::Array1::zeros(wa.len());
            geodesic_into(wa.view(), wb.view(), radius, x, flat.view_mut())
                .map_err(|e| wrap(li, None, e))?;
            layer.weights.iter_mut().zip(&flat).for_each(|(o, &v)| *o = v);
        }
        if let (Some(bo), Some(ba), Some(bb)) = (layer.bias.as_mut(), la.bias.as_ref(), lb.bias.as_ref()) {
            for ((o, &p), &q) in bo.iter_mut().zip(ba).zip(bb) {
                *o = if x >= 1.0 { q } else { ((1.0 - x) * p as f64 + x * q as f64) as f32 };
            }
        }
    }
    Ok(out)
}

/// Per-sphere angles `φ` and radii `n` of a normalized, aligned pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSpec {
    pub angles: Vec<f64>,
    pub radii: Vec<f64>,
}

impl GeodesicSpec {
    pub fn between(a: &Network, b: &Network) -> Result<Self, GeometryError> {
        check_continuous_pair(a, b)?;
        let last = a.layers().len() - 1;
        let mut angles = Vec::new();
        let mut radii = Vec::new();
        for li in 0..last {
            let (wa, wb) = (&a.layers()[li].weights, &b.layers()[li].weights);
            for k in 0..wa.nrows() {
                angles.push(sphere_angle(wa.row(k), wb.row(k), 1.0).map_err(|e| wrap(li, Some(k), e))?);
                radii.push(1.0);
            }
        }
        let radius = last_layer_radius(a);
        let wa = a.layers()[last].weights.flatten();
        let wb = b.layers()[last].weights.flatten();
        angles.push(sphere_angle(wa.view(), wb.view(), radius).map_err(|e| wrap(last, None, e))?);
        radii.push(radius);
        Ok(Self { angles, radii })
    }

    /// `√(Σ (n φ)²)`.
    pub fn distance(&self) -> f64 {
        sqrt(
            self.angles
                .iter()
                .zip(&self.radii)
                .map(|(phi, n)| (n * phi) * (n * phi))
                .sum(),
        )
    }
}

/// Geodesic distance between two normalized, aligned networks.
pub fn geodesic_distance(a: &Network, b: &Network) -> Result<f64, GeometryError> {
    Ok(GeodesicSpec::between(a, b)?.distance())
}

/// Euclidean distance between the flattened trainable parameters.
pub fn euclidean_distance(a: &Network, b: &Network) -> Result<f64, GeometryError> {
    if !a.same_architecture(b) {
        return Err(GeometryError::ArchitectureMismatch);
    }
    let (pa, pb) = (a.params(), b.params());
    Ok(sqrt(
        pa.iter()
            .zip(&pb)
            .map(|(&x, &y)| (x as f64 - y as f64) * (x as f64 - y as f64))
            .sum(),
    ))
}

/// Position of a single weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeightIndex {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
}

fn check_binary_pair(a: &Network, b: &Network) -> Result<(), GeometryError> {
    if !a.same_architecture(b) {
        return Err(GeometryError::ArchitectureMismatch);
    }
    if !a.is_binary() {
        return Err(GeometryError::NotBinary);
    }
    Ok(())
}

/// Weights where the two binary networks disagree, in storage order.
pub fn differing_weights(a: &Network, b: &Network) -> Result<Vec<WeightIndex>, GeometryError> {
    check_binary_pair(a, b)?;
    let mut out = Vec::new();
    for (li, (la, lb)) in a.layers().iter().zip(b.layers()).enumerate() {
        for ((row, col), &wa) in la.weights.indexed_iter() {
            if wa != lb.weights[[row, col]] {
                out.push(WeightIndex { layer: li, row, col });
            }
        }
    }
    Ok(out)
}

/// Number of differing binary weights.
pub fn hamming_distance(a: &Network, b: &Network) -> Result<usize, GeometryError> {
    Ok(differing_weights(a, b)?.len())
}

/// One shortest path between two binary networks: the order in which the
/// differing weights are flipped.
#[derive(Debug, Clone, PartialEq)]
pub struct HammingPath {
    pub flips: Vec<WeightIndex>,
    pub seed: u64,
}

impl HammingPath {
    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    /// State after the first `k` flips, starting from `a` towards `b`. Flipped
    /// weights take `b`'s value and latent.
    pub fn state(&self, a: &Network, b: &Network, k: usize) -> Network {
        let mut out = a.clone();
        apply_flips(&mut out, b, &self.flips[..k.min(self.flips.len())]);
        out
    }
}

fn apply_flips(net: &mut Network, target: &Network, flips: &[WeightIndex]) {
    let layers = net.layers_mut();
    for f in flips {
        let src = &target.layers()[f.layer];
        let dst = &mut layers[f.layer];
        dst.weights[[f.row, f.col]] = src.weights[[f.row, f.col]];
        if let (Some(dl), Some(sl)) = (dst.latent.as_mut(), src.latent.as_ref()) {
            dl[[f.row, f.col]] = sl[[f.row, f.col]];
        }
    }
}

/// Uniformly random flip order over the differing weights.
pub fn random_hamming_path(a: &Network, b: &Network, seed: u64) -> Result<HammingPath, GeometryError> {
    let mut flips = differing_weights(a, b)?;
    flips.shuffle(&mut rng::rng(seed));
    Ok(HammingPath { flips, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MidpointMode {
    /// Geodesic midpoint of normalized, aligned continuous networks.
    Geodesic,
    /// Arithmetic mean of the raw parameters.
    Linear,
    /// `⌈d/2⌉` randomly chosen differing weights of `a` flipped to `b`.
    Hamming,
}

/// Point halfway between two networks.
pub fn midpoint(a: &Network, b: &Network, mode: MidpointMode, seed: u64) -> Result<Network, GeometryError> {
    match mode {
        MidpointMode::Geodesic => network_geodesic(a, b, 0.5),
        MidpointMode::Linear => linear_interpolate(a, b, 0.5),
        MidpointMode::Hamming => {
            let path = random_hamming_path(a, b, seed)?;
            Ok(path.state(a, b, path.len().div_ceil(2)))
        }
    }
}

/// `(1 − x) a + x b` on the trainable parameters; binary layers are
/// re-binarized from the interpolated latent weights.
pub fn linear_interpolate(a: &Network, b: &Network, x: f64) -> Result<Network, GeometryError> {
    if !a.same_architecture(b) {
        return Err(GeometryError::ArchitectureMismatch);
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(GeometryError::BadFraction(x));
    }
    if x == 0.0 {
        return Ok(a.clone());
    }
    if x == 1.0 {
        return Ok(b.clone());
    }
    let (pa, pb) = (a.params(), b.params());
    let p: Vec<f32> = pa
        .iter()
        .zip(&pb)
        .map(|(&u, &v)| ((1.0 - x) * u as f64 + x * v as f64) as f32)
        .collect();
    Ok(a.with_params(&p)?)
}
