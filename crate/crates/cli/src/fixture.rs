//! Simulation manifests and the fixtures they describe.

use std::fs;
use std::path::{Path, PathBuf};

use holoretrieve::io::read_real;
use holoretrieve::{HologramSet, RealImage};
use sha2::{Digest, Sha256};

use crate::config::{self, SimulateConfig};
use crate::failure::Failure;

pub const MANIFEST_NAME: &str = "manifest.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A loaded manifest with its file stems resolved.
#[derive(Debug)]
pub struct Fixture {
    pub manifest: SimulateConfig,
    pub holograms: Vec<PathBuf>,
    pub truth: PathBuf,
}

impl Fixture {
    pub fn load(path: &Path, field: &str) -> Result<Self, Failure> {
        if !path.is_file() {
            return Err(Failure::Io(format!("{field}: fixture manifest {} not found", path.display())));
        }
        let manifest: SimulateConfig = config::load(path)?;
        let Some(files) = &manifest.files else {
            return Err(Failure::Validation(vec![format!(
                "{field}: {} lists no files; is it a simulate manifest?",
                path.display()
            )]));
        };
        if files.holograms.len() != manifest.fresnel_numbers.len() {
            return Err(Failure::Validation(vec![format!(
                "{field}: manifest lists {} holograms for {} Fresnel numbers",
                files.holograms.len(),
                manifest.fresnel_numbers.len()
            )]));
        }
        let holograms = files.holograms.iter().map(|h| config::resolve(path, Path::new(h))).collect();
        let truth = config::resolve(path, Path::new(&files.truth));
        Ok(Self { manifest, holograms, truth })
    }

    pub fn truth(&self) -> Result<RealImage, Failure> {
        read_real(&self.truth).map_err(|e| Failure::io(self.truth.display(), e))
    }
}

/// Reads hologram grids and pairs them with their Fresnel numbers.
pub fn read_holograms(stems: &[PathBuf], fresnel_numbers: &[f64]) -> Result<HologramSet, Failure> {
    let images = stems
        .iter()
        .map(|s| read_real(s).map_err(|e| Failure::io(s.display(), e)))
        .collect::<Result<Vec<_>, _>>()?;
    HologramSet::new(images, fresnel_numbers.to_vec()).map_err(|e| Failure::Validation(vec![format!("holograms: {e}")]))
}

/// Writes `bytes` to `dir/name` and returns the digest.
pub fn write_hashed(dir: &Path, name: &str, bytes: &[u8]) -> Result<String, Failure> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Failure::io(path.display(), e))?;
    Ok(sha256_hex(bytes))
}
