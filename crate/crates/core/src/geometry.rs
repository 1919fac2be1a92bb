//! Control-point grids and the polar-sine destination mapping.
//!
//! All coordinates are `(y, x)` in pixels with the row index growing
//! downward. Polar conversions flip the row axis (`y_up = H - y - 1`) so that
//! angles are measured counter-clockwise in the usual geometric sense.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(y, x)` pixel coordinate.
pub type Point = [f64; 2];

/// Grid density below which the warp gets visibly coarse.
pub const RECOMMENDED_MIN_DELTA: usize = 16;

/// `count` evenly spaced values from `0` to `stop`, both ends included.
pub fn linspace(stop: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::invalid(format!("linspace needs at least 2 samples, got {count}")));
    }
    if !(stop.is_finite() && stop >= 0.0) {
        return Err(Error::invalid(format!("linspace stop must be finite and >= 0, got {stop}")));
    }
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { stop } else { stop * i as f64 / last })
        .collect())
}

/// Evenly spaced `delta x delta` source control points covering the image.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    points: Vec<Point>,
    delta: usize,
    height: usize,
    width: usize,
}

impl ControlGrid {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Point at grid row `i`, grid column `j`.
    pub fn at(&self, i: usize, j: usize) -> Point {
        self.points[i * self.delta + j]
    }

    /// Pixel-space center `(S_h / 2, S_w / 2)`.
    pub fn center(&self) -> Point {
        [self.height as f64 / 2.0, self.width as f64 / 2.0]
    }
}

pub fn make_control_grid(height: usize, width: usize, delta: usize) -> Result<ControlGrid> {
    if delta < 2 {
        return Err(Error::invalid(format!("grid density must be >= 2, got {delta}")));
    }
    if height < 2 || width < 2 {
        return Err(Error::invalid(format!("image must be at least 2x2, got {height}x{width}")));
    }
    if delta < RECOMMENDED_MIN_DELTA {
        log::warn!("grid density {delta} is below {RECOMMENDED_MIN_DELTA}; the warp will be coarse");
    }
    let rows = linspace(height as f64, delta)?;
    let cols = linspace(width as f64, delta)?;
    let points = rows
        .iter()
        .flat_map(|&y| cols.iter().map(move |&x| [y, x]))
        .collect();
    Ok(ControlGrid { points, delta, height, width })
}

/// Bounds and bookkeeping for one family of random distortions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionParams {
    /// Upper bound `A` on the realized amplitude.
    pub amplitude_bound: f64,
    /// Upper bound `ω` on the realized frequency.
    pub freq_bound: f64,
    /// Phase added inside the sine argument, radians.
    pub phase: f64,
    /// Extra rigid rotation `μ`, radians in `[0, π/2)`.
    pub rotation: f64,
    pub seed: u64,
    /// Number of consecutive samples sharing one random draw.
    pub refresh_every: u32,
}

impl Default for DistortionParams {
    fn default() -> Self {
        Self {
            amplitude_bound: 1.0,
            freq_bound: 1.0,
            phase: 0.0,
            rotation: 0.0,
            seed: 0,
            refresh_every: 1,
        }
    }
}

impl DistortionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("amplitude", self.amplitude_bound), ("frequency", self.freq_bound)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} bound must be finite and >= 0, got {v}")));
            }
        }
        if !self.phase.is_finite() {
            return Err(Error::invalid("phase must be finite"));
        }
        if !(0.0..FRAC_PI_2).contains(&self.rotation) {
            return Err(Error::invalid(format!("rotation must lie in [0, pi/2), got {}", self.rotation)));
        }
        if self.refresh_every == 0 {
            return Err(Error::invalid("refresh interval must be >= 1"));
        }
        Ok(())
    }
}

/// Amplitude and frequency actually applied to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledIntensity {
    pub a: f64,
    pub f: f64,
}

impl SampledIntensity {
    pub const NONE: SampledIntensity = SampledIntensity { a: 0.0, f: 0.0 };
}

/// Scales both bounds by the same `2ψ - 1` factor.
pub fn sample_intensity(params: &DistortionParams, psi: f64) -> Result<SampledIntensity> {
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::invalid(format!("psi must lie in [0, 1], got {psi}")));
    }
    let k = 2.0 * psi - 1.0;
    Ok(SampledIntensity { a: k * params.amplitude_bound, f: k * params.freq_bound })
}

/// Deterministic source of `ψ` draws.
///
/// Every `(stream, sample)` pair maps to one draw; samples
/// `k·τ .. (k+1)·τ - 1` of a stream share the draw of block `k`, so results
/// never depend on evaluation order or thread count.
#[derive(Debug, Clone, Copy)]
pub struct IntensitySampler {
    params: DistortionParams,
}

impl IntensitySampler {
    pub fn new(params: DistortionParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &DistortionParams {
        &self.params
    }

    /// Index of the shared draw used by `sample`.
    pub fn block(&self, sample: u64) -> u64 {
        sample / u64::from(self.params.refresh_every)
    }

    pub fn psi(&self, stream: u64, sample: u64) -> f64 {
        let key = mix(mix(mix(self.params.seed) ^ stream) ^ self.block(sample));
        ChaCha8Rng::seed_from_u64(key).gen::<f64>()
    }

    pub fn draw(&self, stream: u64, sample: u64) -> (f64, SampledIntensity) {
        let psi = self.psi(stream, sample);
        let k = 2.0 * psi - 1.0;
        let intensity = SampledIntensity {
            a: k * self.params.amplitude_bound,
            f: k * self.params.freq_bound,
        };
        (psi, intensity)
    }
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Polar frame anchored at a pole given in flipped (y-up) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarFrame {
    height: f64,
    pole: Point,
}

impl PolarFrame {
    pub fn new(height: f64, pole: Point) -> Self {
        Self { height, pole }
    }

    /// Frame whose pole is the pixel-space image center `(S_h/2, S_w/2)`.
    pub fn centered(height: usize, width: usize) -> Self {
        let h = height as f64;
        let center = [h / 2.0, width as f64 / 2.0];
        Self { height: h, pole: [h - center[0] - 1.0, center[1]] }
    }

    pub fn to_polar(&self, point: Point) -> (f64, f64) {
        cart_to_polar(point, self.pole, self.height)
    }

    pub fn to_cartesian(&self, r: f64, theta: f64) -> Point {
        polar_to_cart(r, theta, self.pole, self.height)
    }
}

/// Pixel coordinate to `(r, θ)` about `pole`, with `θ ∈ [0, 2π)`.
///
/// `pole` lives in the flipped frame where the geometric row is
/// `height - y - 1`.
pub fn cart_to_polar(point: Point, pole: Point, height: f64) -> (f64, f64) {
    let dy = (height - point[0] - 1.0) - pole[0];
    let dx = point[1] - pole[1];
    let r = dx.hypot(dy);
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let theta = dy.atan2(dx).rem_euclid(TAU);
    (r, if theta >= TAU { 0.0 } else { theta })
}

/// Inverse of [`cart_to_polar`].
pub fn polar_to_cart(r: f64, theta: f64, pole: Point, height: f64) -> Point {
    let (s, c) = theta.sin_cos();
    let y_up = pole[0] + r * s;
    let x = pole[1] + r * c;
    [height - y_up - 1.0, x]
}

/// Displaced polar angle `θ + (π/8)·a·sin(2π·f·r/D + φ) + μ`.
pub fn distort_angle(
    r: f64,
    theta: f64,
    intensity: SampledIntensity,
    diameter_px: f64,
    rotation: f64,
    phase: f64,
) -> Result<f64> {
    if !(diameter_px > 0.0) {
        return Err(Error::invalid(format!("diameter must be > 0, got {diameter_px}")));
    }
    Ok(theta + angle_offset(r, intensity, diameter_px, rotation, phase))
}

#[inline]
fn angle_offset(r: f64, intensity: SampledIntensity, diameter_px: f64, rotation: f64, phase: f64) -> f64 {
    let wave = (TAU * intensity.f * (r / diameter_px) + phase).sin();
    FRAC_PI_8 * intensity.a * wave + rotation
}

/// Mapped destinations of a [`ControlGrid`], same shape and ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetGrid {
    points: Vec<Point>,
    delta: usize,
    height: usize,
    width: usize,
}

impl TargetGrid {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// True when `grid` could have produced this target.
    pub fn matches(&self, grid: &ControlGrid) -> bool {
        self.delta == grid.delta && self.height == grid.height && self.width == grid.width
    }

    /// Target equal to the source, i.e. no deformation.
    pub fn identity(grid: &ControlGrid) -> Self {
        Self {
            points: grid.points.clone(),
            delta: grid.delta,
            height: grid.height,
            width: grid.width,
        }
    }
}

/// Moves every control point along its circle about the image center.
///
/// Points whose angular offset is exactly zero are copied untouched.
pub fn make_target_grid(
    grid: &ControlGrid,
    intensity: SampledIntensity,
    rotation: f64,
    phase: f64,
) -> Result<TargetGrid> {
    if !(intensity.a.is_finite() && intensity.f.is_finite() && rotation.is_finite() && phase.is_finite()) {
        return Err(Error::invalid("distortion parameters must be finite"));
    }
    let frame = PolarFrame::centered(grid.height, grid.width);
    let diameter = grid.height.min(grid.width) as f64;
    let points = grid
        .points
        .iter()
        .map(|&p| {
            let (r, theta) = frame.to_polar(p);
            if r == 0.0 {
                return p;
            }
            let offset = angle_offset(r, intensity, diameter, rotation, phase);
            if offset == 0.0 {
                p
            } else {
                frame.to_cartesian(r, theta + offset)
            }
        })
        .collect();
    Ok(TargetGrid { points, delta: grid.delta, height: grid.height, width: grid.width })
}

/// Largest angular offset any point can receive.
pub fn max_angular_offset(intensity: SampledIntensity, rotation: f64) -> f64 {
    PI / 8.0 * intensity.a.abs() + rotation.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn linspace_examples() {
        assert_eq!(linspace(4.0, 5).unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(linspace(0.0, 3).unwrap(), vec![0.0, 0.0, 0.0]);
        let v = linspace(512.0, 16).unwrap();
        assert_eq!(v.len(), 16);
        for (i, w) in v.windows(2).enumerate() {
            assert_abs_diff_eq!(w[1] - w[0], 34.133_333_333_333_33, epsilon = 1e-9);
            assert_abs_diff_eq!(v[i], 512.0 * i as f64 / 15.0, epsilon = 1e-12);
        }
        assert_eq!(v[15], 512.0);
        assert!(matches!(linspace(1.0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn control_grid_shapes() {
        let g = make_control_grid(100, 100, 2).unwrap();
        assert_eq!(g.points(), &[[0.0, 0.0], [0.0, 100.0], [100.0, 0.0], [100.0, 100.0]]);

        let g = make_control_grid(512, 512, 16).unwrap();
        assert_eq!(g.points().len(), 256);
        assert_abs_diff_eq!(g.at(1, 1)[0], 512.0 / 15.0, epsilon = 1e-12);
        assert_eq!(g.at(15, 15), [512.0, 512.0]);

        let g = make_control_grid(100, 200, 3).unwrap();
        assert_eq!(g.at(1, 1), [50.0, 100.0]);
        assert!(make_control_grid(100, 100, 1).is_err());
    }

    #[test]
    fn intensity_examples() {
        let p = DistortionParams { amplitude_bound: 2.0, freq_bound: 3.0, ..Default::default() };
        assert_eq!(sample_intensity(&p, 1.0).unwrap(), SampledIntensity { a: 2.0, f: 3.0 });
        assert_eq!(sample_intensity(&p, 0.5).unwrap(), SampledIntensity { a: 0.0, f: 0.0 });
        assert_eq!(sample_intensity(&p, 0.0).unwrap(), SampledIntensity { a: -2.0, f: -3.0 });
        assert!(sample_intensity(&p, 1.5).is_err());
        assert!(sample_intensity(&p, -0.1).is_err());
    }

    #[test]
    fn params_validation() {
        let ok = DistortionParams::default();
        assert!(ok.validate().is_ok());
        assert!(DistortionParams { rotation: FRAC_PI_2, ..ok }.validate().is_err());
        assert!(DistortionParams { amplitude_bound: -1.0, ..ok }.validate().is_err());
        assert!(DistortionParams { freq_bound: f64::NAN, ..ok }.validate().is_err());
        assert!(DistortionParams { refresh_every: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn sampler_shares_draws_within_refresh_block() {
        let params = DistortionParams { refresh_every: 3, seed: 7, ..Default::default() };
        let s = IntensitySampler::new(params).unwrap();
        assert_eq!(s.psi(0, 0), s.psi(0, 1));
        assert_eq!(s.psi(0, 0), s.psi(0, 2));
        assert_ne!(s.psi(0, 2), s.psi(0, 3));
        assert_ne!(s.psi(0, 0), s.psi(1, 0));
        let (psi, i) = s.draw(4, 9);
        assert!((0.0..1.0).contains(&psi));
        assert_eq!(i, sample_intensity(&params, psi).unwrap());
    }

    #[test]
    fn polar_examples() {
        let pole = [50.0, 50.0];
        let h = 100.0;
        // the pole itself: point whose flipped row equals the pole row
        assert_eq!(cart_to_polar([h - 50.0 - 1.0, 50.0], pole, h), (0.0, 0.0));
        let (r, t) = cart_to_polar([49.0, 51.0], pole, h);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 0.0, epsilon = 1e-15);

        // flipped row of (0, 0) is 99, so the offset to the pole is (49, -50)
        let (r, t) = cart_to_polar([0.0, 0.0], pole, h);
        assert_abs_diff_eq!(r, 49f64.hypot(50.0), epsilon = 1e-12);
        assert_abs_diff_eq!(r, 70.007_142_492_748_56, epsilon = 1e-9);
        assert_abs_diff_eq!(t, 2.366_295_156_777_667, epsilon = 1e-12);
        let back = polar_to_cart(r, t, pole, h);
        assert_abs_diff_eq!(back[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back[1], 0.0, epsilon = 1e-9);

        assert_eq!(polar_to_cart(0.0, 1.234, pole, h), [49.0, 50.0]);
    }

    #[test]
    fn centered_frame_pole_is_pixel_center() {
        for (h, w) in [(100, 100), (101, 57), (512, 256)] {
            let frame = PolarFrame::centered(h, w);
            let c = [h as f64 / 2.0, w as f64 / 2.0];
            assert_eq!(frame.to_polar(c), (0.0, 0.0));
            assert_eq!(frame.to_cartesian(0.0, 0.3), c);
        }
    }

    #[test]
    fn distort_angle_examples() {
        let one = SampledIntensity { a: 1.0, f: 1.0 };
        assert_eq!(distort_angle(0.0, 0.7, one, 100.0, 0.0, 0.0).unwrap(), 0.7);
        // 2π·f·r/D = π/2 at r = D/4
        let t = distort_angle(25.0, 0.7, one, 100.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(t, 0.7 + FRAC_PI_8, epsilon = 1e-15);
        let t = distort_angle(33.0, 0.7, SampledIntensity::NONE, 100.0, PI / 4.0, 0.0).unwrap();
        assert_abs_diff_eq!(t, 0.7 + PI / 4.0, epsilon = 1e-15);
        assert!(distort_angle(1.0, 0.0, one, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn target_grid_identity_and_center() {
        let g = make_control_grid(101, 101, 17).unwrap();
        let t = make_target_grid(&g, SampledIntensity::NONE, 0.0, 0.0).unwrap();
        assert_eq!(t.points(), g.points());

        let g = make_control_grid(100, 100, 5).unwrap();
        let t = make_target_grid(&g, SampledIntensity { a: 3.0, f: 2.0 }, 0.4, 0.3).unwrap();
        assert_eq!(t.points()[12], [50.0, 50.0]);
    }

    #[test]
    fn target_grid_corner_matches_scalar_evaluation() {
        // Step-by-step evaluation (independent script): center (50, 50),
        // offset of (0,0) is (dy_up=50, dx=-50), r = 70.7107, θ = 3π/4,
        // θ' = θ + π/8·sin(2π·r/100) = 1.97767085..., back to pixels.
        let g = make_control_grid(100, 100, 3).unwrap();
        let t = make_target_grid(&g, SampledIntensity { a: 1.0, f: 1.0 }, 0.0, 0.0).unwrap();
        let p = t.points()[0];
        assert_abs_diff_eq!(p[0], -14.938_012_875_862_285, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 22.016_889_312_759_645, epsilon = 1e-9);
    }

    fn intensity_strategy() -> impl Strategy<Value = (f64, f64, f64, f64)> {
        (-12.0..12.0f64, -12.0..12.0f64, 0.0..FRAC_PI_2, -PI..PI)
    }

    proptest! {
        #[test]
        fn round_trip_is_exact_inverse(y in -600.0..600.0f64, x in -600.0..600.0f64, h in 2usize..1024, w in 2usize..1024) {
            let frame = PolarFrame::centered(h, w);
            let (r, t) = frame.to_polar([y, x]);
            prop_assert!((0.0..TAU).contains(&t));
            let back = frame.to_cartesian(r, t);
            prop_assert!((back[0] - y).abs() <= 1e-9 && (back[1] - x).abs() <= 1e-9);
        }

        #[test]
        fn radius_is_preserved((a, f, mu, phi) in intensity_strategy(), h in 8usize..600, w in 8usize..600, delta in 2usize..24) {
            let g = make_control_grid(h, w, delta).unwrap();
            let t = make_target_grid(&g, SampledIntensity { a, f }, mu, phi).unwrap();
            let c = g.center();
            for (p, q) in g.points().iter().zip(t.points()) {
                prop_assert!(q[0].is_finite() && q[1].is_finite());
                let before = (p[0] - c[0]).hypot(p[1] - c[1]);
                let after = (q[0] - c[0]).hypot(q[1] - c[1]);
                prop_assert!((before - after).abs() <= 1e-9, "drift {}", (before - after).abs());
            }
        }

        #[test]
        fn angular_offset_is_bounded((a, f, mu, phi) in intensity_strategy(), r in 0.0..800.0f64, theta in 0.0..TAU) {
            let i = SampledIntensity { a, f };
            let t = distort_angle(r, theta, i, 256.0, mu, phi).unwrap();
            prop_assert!((t - theta).abs() <= max_angular_offset(i, mu) + 1e-12);
        }
    }
}
