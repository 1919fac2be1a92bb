//! Procedural abdominal CT phantom with a scan table, used as a bundled
//! fixture. The layout is fixed in relative coordinates and scales with
//! the requested size; only the additive noise depends on the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dicom::DicomSliceMeta;
use crate::image::{ImageGrid, PixelSemantics};

pub const AIR_HU: f64 = -1000.0;
const NOISE_HU: f64 = 8.0;
const FIELD_OF_VIEW_MM: f64 = 500.0;
const TABLE_HEIGHT_MM: f64 = 160.0;

#[derive(Debug, Clone)]
pub struct Phantom {
    /// Integer HU values.
    pub image: ImageGrid,
    /// Liver label (1) on background (0).
    pub mask: ImageGrid,
    pub meta: DicomSliceMeta,
}

/// Filled ellipse in relative coordinates, rotated by `angle` radians.
#[derive(Clone, Copy)]
struct Shape {
    center: [f64; 2],
    semi: [f64; 2],
    angle: f64,
    hu: f64,
    rect: bool,
}

impl Shape {
    const fn ellipse(cy: f64, cx: f64, ry: f64, rx: f64, hu: f64) -> Self {
        Self { center: [cy, cx], semi: [ry, rx], angle: 0.0, hu, rect: false }
    }

    const fn rect(cy: f64, cx: f64, ry: f64, rx: f64, angle: f64, hu: f64) -> Self {
        Self { center: [cy, cx], semi: [ry, rx], angle, hu, rect: true }
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        let (dy, dx) = (u - self.center[0], v - self.center[1]);
        let (s, c) = self.angle.sin_cos();
        let (ly, lx) = ((dy * c - dx * s) / self.semi[0], (dy * s + dx * c) / self.semi[1]);
        if self.rect { ly.abs() <= 1.0 && lx.abs() <= 1.0 } else { ly * ly + lx * lx <= 1.0 }
    }
}

fn layout() -> Vec<Shape> {
    let mut s = vec![
        // table: couch top and a lower support rail, below the body
        Shape::rect(0.845, 0.5, 0.012, 0.44, 0.0, 300.0),
        Shape::rect(0.872, 0.5, 0.008, 0.40, 0.0, -300.0),
        Shape::rect(0.905, 0.5, 0.018, 0.36, 0.0, 150.0),
        Shape::rect(0.905, 0.2, 0.01, 0.03, 0.0, -900.0),
        Shape::rect(0.905, 0.8, 0.01, 0.03, 0.0, -900.0),
        // body: fat shell, then muscle/soft tissue
        Shape::ellipse(0.52, 0.5, 0.27, 0.37, -100.0),
        Shape::ellipse(0.52, 0.5, 0.25, 0.35, 40.0),
        // liver (image left), spleen, kidneys
        Shape::ellipse(0.46, 0.33, 0.13, 0.12, 65.0),
        Shape::ellipse(0.45, 0.73, 0.07, 0.05, 50.0),
        Shape::ellipse(0.60, 0.36, 0.05, 0.035, 30.0),
        Shape::ellipse(0.60, 0.64, 0.05, 0.035, 30.0),
        // stomach with an air-fluid level
        Shape::ellipse(0.42, 0.58, 0.07, 0.09, 20.0),
        Shape::rect(0.39, 0.58, 0.025, 0.06, 0.0, -950.0),
        // aorta, vena cava
        Shape::ellipse(0.62, 0.53, 0.018, 0.018, 180.0),
        Shape::ellipse(0.61, 0.45, 0.02, 0.015, 130.0),
        // vertebral body, canal and posterior elements
        Shape::ellipse(0.69, 0.5, 0.045, 0.05, 700.0),
        Shape::ellipse(0.74, 0.5, 0.015, 0.015, 10.0),
        Shape::rect(0.765, 0.5, 0.02, 0.01, 0.0, 650.0),
        Shape::rect(0.735, 0.455, 0.012, 0.03, 0.5, 600.0),
        Shape::rect(0.735, 0.545, 0.012, 0.03, -0.5, 600.0),
    ];
    // ribs along the body outline
    for k in 0..12 {
        let t = -2.4 + k as f64 * (4.8 / 11.0);
        if t.abs() < 0.35 {
            continue;
        }
        let (u, v) = (0.52 - 0.235 * t.cos(), 0.5 + 0.335 * t.sin());
        s.push(Shape::rect(u, v, 0.012, 0.022, t, 550.0));
    }
    // bowel loops with gas pockets
    let loops = [
        (0.50, 0.45, 0.030),
        (0.53, 0.56, 0.025),
        (0.35, 0.45, 0.022),
        (0.55, 0.70, 0.028),
        (0.63, 0.30, 0.022),
        (0.40, 0.68, 0.020),
        (0.33, 0.53, 0.018),
        (0.66, 0.66, 0.020),
    ];
    for (i, &(u, v, r)) in loops.iter().enumerate() {
        s.push(Shape::ellipse(u, v, r, r * 1.3, 25.0));
        let gas = if i % 2 == 0 { -850.0 } else { -600.0 };
        s.push(Shape::rect(u - r * 0.3, v + r * 0.2, r * 0.4, r * 0.5, i as f64 * 0.7, gas));
    }
    // calcifications and small vessels
    for (u, v) in [(0.44, 0.40), (0.57, 0.41), (0.47, 0.62), (0.56, 0.50), (0.31, 0.60), (0.68, 0.40)] {
        s.push(Shape::ellipse(u, v, 0.006, 0.006, 400.0));
    }
    s
}

/// Square phantom of side `size` with geometry metadata placing the table
/// just outside the reconstruction circle.
pub fn abdominal_phantom(size: usize, seed: u64) -> Phantom {
    let shapes = layout();
    let liver = shapes[7];
    let n = size as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_HU).expect("finite noise level");
    let image = ImageGrid::from_fn(size, size, PixelSemantics::Hu, |r, c| {
        let (u, v) = ((r as f64 + 0.5) / n, (c as f64 + 0.5) / n);
        let mut hu = AIR_HU;
        for s in &shapes {
            if s.contains(u, v) {
                hu = s.hu;
            }
        }
        (hu + noise.sample(&mut rng)).round().clamp(-1024.0, 3071.0)
    });
    let mask = ImageGrid::from_fn(size, size, PixelSemantics::Label, |r, c| {
        f64::from(u8::from(liver.contains((r as f64 + 0.5) / n, (c as f64 + 0.5) / n)))
    });
    let zeta = FIELD_OF_VIEW_MM / n;
    let z = -120.0;
    let corner = -FIELD_OF_VIEW_MM / 2.0 + zeta / 2.0;
    let meta = DicomSliceMeta {
        reconstruction_diameter_mm: Some(FIELD_OF_VIEW_MM),
        table_height_mm: Some(TABLE_HEIGHT_MM),
        image_position_patient_mm: Some([corner, corner, z]),
        slice_location_mm: Some(z),
        pixel_spacing_mm_per_px: Some([zeta, zeta]),
        recon_center_mm: Some([0.0, 0.0, z]),
        scan_start_mm: None,
        scan_end_mm: None,
        rescale_slope: Some(1.0),
        rescale_intercept: Some(-1024.0),
    };
    Phantom { image, mask, meta }
}

/// Rows whose pixels belong to the table for a phantom of side `size`.
pub fn table_rows(size: usize) -> std::ops::Range<usize> {
    let n = size as f64;
    ((0.833 * n).floor() as usize)..((0.923 * n).ceil() as usize).min(size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{apply_valid_mask, compute_table_geometry, TableCalibration};

    #[test]
    fn deterministic_and_integer() {
        let a = abdominal_phantom(128, 5);
        assert_eq!(a.image, abdominal_phantom(128, 5).image);
        assert_ne!(a.image, abdominal_phantom(128, 6).image);
        assert!(a.image.data().iter().all(|v| v.fract() == 0.0));
        assert_eq!(a.mask.label_set(), vec![0, 1]);
    }

    #[test]
    fn table_lies_outside_the_valid_disc_and_body_inside() {
        let p = abdominal_phantom(256, 1);
        let g = compute_table_geometry(&p.meta, (256, 256), TableCalibration::default(), -1024.0).unwrap();
        let cleaned = apply_valid_mask(&p.image, &g);
        for r in table_rows(256) {
            assert!((0..256).all(|c| cleaned.get(r, c) == -1024.0));
        }
        let table_px = table_rows(256).flat_map(|r| (0..256).map(move |c| (r, c))).filter(|&(r, c)| p.image.get(r, c) > -500.0).count();
        assert!(table_px > 1000);
        let body_lost = (0..256 * 256)
            .filter(|&i| p.image.data()[i] > -500.0 && !table_rows(256).contains(&(i / 256)) && cleaned.data()[i] == -1024.0)
            .count();
        assert_eq!(body_lost, 0);
    }
}
