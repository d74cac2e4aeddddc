use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use holoretrieve::io::GridFile;
use holoretrieve::phantom::{simulate_holograms, sphere_phantom};
use holoretrieve::{MaterialCoupling, RealImage, Unit};

use crate::config::{self, Diagnostics, FixtureFiles, OutputConfig, SimulateConfig};
use crate::failure::Failure;
use crate::fixture::{write_hashed, MANIFEST_NAME};

pub struct SimulateArgs<'a> {
    pub config: &'a Path,
    pub out: Option<&'a Path>,
    pub seed: Option<u64>,
}

/// Writes `truth`, `hologram_<j>` and a manifest that reproduces them.
pub fn run(args: &SimulateArgs<'_>) -> Result<PathBuf, Failure> {
    let mut cfg: SimulateConfig = config::load(args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if cfg.seed > i64::MAX as u64 {
        let mut d = Diagnostics::default();
        d.push("seed", "must fit in a signed 64-bit integer to be recorded in the manifest");
        d.finish()?;
    }
    let dir = match (args.out, &cfg.output.dir) {
        (Some(out), _) => out.to_path_buf(),
        (None, Some(dir)) => config::resolve(args.config, dir),
        (None, None) => config::config_dir(args.config),
    };

    let [ny, nx] = cfg.shape;
    let truth = if cfg.phantom.spheres.is_empty() {
        RealImage::zeros(ny, nx, Unit::Radians)?
    } else {
        sphere_phantom(&cfg.phantom, ny, nx)?
    };
    let coupling = MaterialCoupling::new(cfg.c_beta_delta)?;
    let data = simulate_holograms(&truth, &coupling, &cfg.fresnel_numbers, &cfg.noise())?;

    fs::create_dir_all(&dir).map_err(|e| Failure::io(dir.display(), e))?;
    let mut sha256 = BTreeMap::new();
    let mut put = |stem: &str, grid: GridFile| -> Result<(), Failure> {
        for (ext, bytes) in [("raw", grid.payload()), ("json", grid.sidecar().into_bytes())] {
            let name = format!("{stem}.{ext}");
            let digest = write_hashed(&dir, &name, &bytes)?;
            sha256.insert(name, digest);
        }
        Ok(())
    };
    put("truth", GridFile::real(&truth, Some("ground-truth phase".into())))?;
    let mut holograms = Vec::with_capacity(data.len());
    for (j, (h, f)) in data.holograms().iter().zip(data.fresnel_numbers()).enumerate() {
        let stem = format!("hologram_{j}");
        put(&stem, GridFile::real(h, Some(format!("fresnel_number = {f:e}"))))?;
        holograms.push(stem);
    }

    let manifest = SimulateConfig {
        output: OutputConfig::default(),
        files: Some(FixtureFiles { truth: "truth".into(), holograms, sha256 }),
        ..cfg
    };
    let text = toml::to_string(&manifest).map_err(|e| Failure::io(MANIFEST_NAME, e))?;
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, text).map_err(|e| Failure::io(path.display(), e))?;
    Ok(path)
}
