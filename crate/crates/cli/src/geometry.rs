use std::fmt::Write as _;

use holoretrieve::geometry::{effective_parameters, fresnel_numbers_at_reference, EffectiveParameters, SetupGeometry};
use serde::Serialize;

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

pub struct GeometryArgs<'a> {
    pub source_sample: &'a [f64],
    pub source_detector: f64,
    pub pixel_pitch: f64,
    pub energy_kev: f64,
    pub format: Format,
}

#[derive(Debug, Serialize)]
struct Row {
    source_sample: f64,
    #[serde(flatten)]
    effective: EffectiveParameters,
    /// Fresnel number at the first distance's pixel size.
    fresnel_number_at_reference: f64,
}

pub fn run(args: &GeometryArgs<'_>) -> Result<String, Failure> {
    let rows = args
        .source_sample
        .iter()
        .map(|&z| {
            effective_parameters(&SetupGeometry {
                source_sample: z,
                source_detector: args.source_detector,
                pixel_pitch: args.pixel_pitch,
                energy_kev: args.energy_kev,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let at_reference =
        fresnel_numbers_at_reference(args.source_sample, args.source_detector, args.pixel_pitch, args.energy_kev)?;
    let rows: Vec<Row> = rows
        .into_iter()
        .zip(args.source_sample)
        .zip(at_reference)
        .map(|((effective, &source_sample), f)| Row { source_sample, effective, fresnel_number_at_reference: f })
        .collect();

    Ok(match args.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&rows).map_err(|e| Failure::io("json", e))?;
            s.push('\n');
            s
        }
        Format::Text => {
            let mut s = String::from("z01_m        M          dx_eff_m     z_eff_m      lambda_m     F            F_ref\n");
            for r in &rows {
                let e = &r.effective;
                let _ = writeln!(
                    s,
                    "{:<12.6e} {:<10.4} {:<12.5e} {:<12.5e} {:<12.5e} {:<12.5e} {:.5e}",
                    r.source_sample,
                    e.magnification,
                    e.pixel_size,
                    e.distance,
                    e.wavelength,
                    e.fresnel_number,
                    r.fresnel_number_at_reference
                );
            }
            s
        }
    })
}
