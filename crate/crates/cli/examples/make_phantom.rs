//! Writes synthetic CT slices for trying the CLI.
//!
//! cargo run --release -p polarwarp-cli --example make_phantom -- OUT_DIR [SIZE] [COUNT] [--dicom]

use std::path::Path;

use polarwarp_core::dicom::{write_dicom_slice, VrEncoding};
use polarwarp_core::phantom::abdominal_phantom;
use polarwarp_core::raster::{sidecar_path, write_raster16, Quantization};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dicom = args.iter().any(|a| a == "--dicom");
    let pos: Vec<&String> = args.iter().filter(|a| !a.starts_with("--")).collect();
    let out = Path::new(pos.first().ok_or("usage: make_phantom OUT_DIR [SIZE] [COUNT] [--dicom]")?);
    let size: usize = pos.get(1).map(|s| s.parse()).transpose()?.unwrap_or(256);
    let count: usize = pos.get(2).map(|s| s.parse()).transpose()?.unwrap_or(1);
    std::fs::create_dir_all(out.join("masks"))?;
    for i in 0..count {
        let mut p = abdominal_phantom(size, i as u64 + 1);
        let z = -120.0 + 2.5 * i as f64;
        p.meta.slice_location_mm = Some(z);
        if let Some(ipp) = p.meta.image_position_patient_mm.as_mut() {
            ipp[2] = z;
        }
        if let Some(rc) = p.meta.recon_center_mm.as_mut() {
            rc[2] = z;
        }
        let name = format!("slice_{i:03}");
        if dicom {
            let raw = p.image.map(|v| v + 1024.0);
            std::fs::write(out.join(format!("{name}.dcm")), write_dicom_slice(&raw, &p.meta, VrEncoding::Explicit)?)?;
        } else {
            let png = out.join(format!("{name}.png"));
            write_raster16(&png, &p.image, &Quantization::HU)?;
            let mut meta = p.meta.clone();
            meta.rescale_slope = Some(1.0);
            meta.rescale_intercept = Some(Quantization::HU.offset);
            std::fs::write(sidecar_path(&png), serde_json::to_vec_pretty(&meta)?)?;
        }
        write_raster16(&out.join("masks").join(format!("{name}.png")), &p.mask, &Quantization::IDENTITY)?;
    }
    Ok(())
}
