//! End-to-end experiment orchestration: configuration, simulation,
//! reconstruction, the two worked examples and sweep profiles, with
//! atomic artifact writes and reproducibility manifests.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal::{electrode_at, polygon_hash, ConformalMap, Electrode, MapCache, MapNormalization, SchwarzChristoffelMap};
use crate::domain::{Phantom, PhantomFile, PhantomOptions, PolygonDomain};
use crate::error::{Error, Result};
use crate::factorization::{reconstruct, GridSpec, ReconstructionGrid, ReconstructionParams, DEFAULT_R_MAX};
use crate::fem::{generate_mesh, BisweepSimulator};
use crate::pipeline::{add_noise, bisweep_to_ntd, perturb_geometry, BisweepMatrix, BisweepSource};

/// All parameters of an experiment. Every field except the phantom has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Inline phantom; when both this and `phantom_file` are absent the built-in L-shaped example is used.
    pub phantom: Option<PhantomFile>,
    /// Phantom JSON file, relative to the config file.
    pub phantom_file: Option<PathBuf>,
    pub electrodes: usize,
    pub mesh_h: f64,
    pub order: usize,
    pub dipoles: usize,
    /// Noise standard deviation as a fraction of max |ς|.
    pub noise: f64,
    /// Vertex perturbation as a fraction of the domain diameter.
    pub perturb: f64,
    pub seed: Option<u64>,
    pub grid: usize,
    pub r_max: f64,
    /// Number of noisy samples in the second example.
    pub samples: usize,
    /// Number of points on a sweep profile.
    pub sweep_samples: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            phantom: None,
            phantom_file: None,
            electrodes: 64,
            mesh_h: 0.03,
            order: 32,
            dipoles: 15,
            noise: 0.0,
            perturb: 0.0,
            seed: None,
            grid: 161,
            r_max: DEFAULT_R_MAX,
            samples: 5,
            sweep_samples: 128,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line overrides; `None` keeps the config value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub electrodes: Option<usize>,
    pub mesh_h: Option<f64>,
    pub order: Option<usize>,
    pub dipoles: Option<usize>,
    pub noise: Option<f64>,
    pub perturb: Option<f64>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Dense setup of the first example: many electrodes, high order.
    pub fn example1() -> Self {
        Self { electrodes: 128, order: 64, ..Self::default() }
    }

    /// Sparse, perturbed and noisy setup of the second example.
    pub fn example2() -> Self {
        Self { electrodes: 16, order: 12, noise: 0.02, perturb: 0.01, seed: Some(1), ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("config", e.to_string()))
    }

    /// Read a config file, resolving `phantom_file` relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(p) = &cfg.phantom_file {
            if p.is_relative() {
                cfg.phantom_file = Some(path.parent().unwrap_or(Path::new(".")).join(p));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! set {
            ($f:ident) => {
                if let Some(v) = o.$f.clone() {
                    self.$f = v;
                }
            };
        }
        set!(electrodes);
        set!(mesh_h);
        set!(order);
        set!(dipoles);
        set!(noise);
        set!(perturb);
        set!(grid);
        set!(out);
        if o.seed.is_some() {
            self.seed = o.seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::OutOfRange(m));
        if self.electrodes < 4 {
            return bad(format!("need at least 4 electrodes, got {}", self.electrodes));
        }
        if self.order == 0 || self.order >= self.electrodes {
            return bad(format!("order M must lie in 1..={}, got {}", self.electrodes - 1, self.order));
        }
        if self.dipoles == 0 || self.dipoles.is_multiple_of(2) {
            return bad(format!("dipole count must be odd, got {}", self.dipoles));
        }
        if !(self.mesh_h > 0.0 && self.mesh_h.is_finite()) {
            return bad(format!("mesh size must be positive, got {}", self.mesh_h));
        }
        if !(self.noise >= 0.0 && self.noise <= 1.0) {
            return bad(format!("noise level must lie in [0, 1], got {}", self.noise));
        }
        if !(self.perturb >= 0.0 && self.perturb <= 0.05) {
            return bad(format!("perturbation must lie in [0, 0.05], got {}", self.perturb));
        }
        if !(self.r_max > 0.0 && self.r_max < 1.0) {
            return bad(format!("guard radius must lie in (0, 1), got {}", self.r_max));
        }
        if self.grid < 2 || self.grid > 4001 {
            return bad(format!("grid resolution must lie in 2..=4001, got {}", self.grid));
        }
        if self.samples == 0 || self.sweep_samples < 2 {
            return bad("sample counts must be positive".into());
        }
        if (self.noise > 0.0 || self.perturb > 0.0) && self.seed.is_none() {
            return Err(Error::Validation("a seed is required when noise or perturbation is nonzero".into()));
        }
        if self.phantom.is_some() && self.phantom_file.is_some() {
            return Err(Error::Validation("give either an inline phantom or a phantom file, not both".into()));
        }
        Ok(())
    }

    pub fn phantom(&self) -> Result<Phantom> {
        match (&self.phantom, &self.phantom_file) {
            (Some(p), _) => p.build(PhantomOptions::default()),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                PhantomFile::from_json(&text)?.build(PhantomOptions::default())
            }
            (None, None) => Ok(example_phantom()),
        }
    }

    fn seed_or_zero(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn reconstruction_params(&self) -> ReconstructionParams {
        ReconstructionParams {
            order: self.order,
            dipoles: self.dipoles,
            grid: GridSpec::Domain { resolution: self.grid },
            r_max: self.r_max,
            cutoffs: None,
            parallel: true,
        }
    }
}

/// Non-convex L-shaped hexagon with a disk and a square inclusion at κ = 1/2.
pub fn example_phantom() -> Phantom {
    let file: PhantomFile = serde_json::from_str(EXAMPLE_PHANTOM).expect("built-in phantom parses");
    file.build(PhantomOptions::default()).expect("built-in phantom is admissible")
}

const EXAMPLE_PHANTOM: &str = r#"{
  "vertices": [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]],
  "inclusions": [
    {"type": "disk", "center": [0.5, 1.4], "radius": 0.25, "kappa": 0.5},
    {"type": "polygon", "vertices": [[1.3, 0.3], [1.7, 0.3], [1.7, 0.7], [1.3, 0.7]], "kappa": 0.5}
  ]
}"#;

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one command run: effective config and checksums of every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub outputs: BTreeMap<String, String>,
}

struct Artifacts {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), outputs: BTreeMap::new() }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        self.outputs.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(path)
    }

    fn finish(mut self, command: &str, config: &ExperimentConfig, seeds: Vec<u64>) -> Result<BTreeMap<String, String>> {
        let manifest = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            seeds,
            outputs: self.outputs.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        self.write(&format!("{command}.manifest.json"), &text)?;
        Ok(self.outputs)
    }
}

/// Build the map of a domain, reusing a cache file whose polygon hash matches.
pub fn map_with_cache(domain: &PolygonDomain, cache: Option<&Path>) -> Result<SchwarzChristoffelMap> {
    if let Some(path) = cache {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(c) = serde_json::from_str::<MapCache>(&text) {
                if c.polygon_hash == polygon_hash(domain) {
                    if let Ok(m) = SchwarzChristoffelMap::from_cache(domain, &c) {
                        log::debug!("reusing map cache {}", path.display());
                        return Ok(m);
                    }
                }
            }
        }
    }
    let map = SchwarzChristoffelMap::build(domain, &MapNormalization::default())?;
    if let Some(path) = cache {
        let text = serde_json::to_string_pretty(&map.to_cache()).expect("cache serializes") + "\n";
        write_atomic(path, text.as_bytes())?;
    }
    Ok(map)
}

/// Result of a simulation run.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub clean: BisweepMatrix,
    pub data: BisweepMatrix,
    pub outputs: BTreeMap<String, String>,
}

/// Simulate bisweep data on the config's phantom at equispaced disk preimages.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let phantom = cfg.phantom()?;
    let mut art = Artifacts::new(&cfg.out);
    let cache = cfg.out.join("map_cache.json");
    let map = map_with_cache(phantom.domain(), Some(&cache))?;
    art.outputs.insert("map_cache.json".into(), sha256_hex(&fs::read(&cache).map_err(|e| Error::io(&cache, e))?));
    let electrodes = map.electrode_positions(cfg.electrodes)?;
    let mesh = generate_mesh(&phantom, cfg.mesh_h)?;
    let (node, ele) = mesh.to_triangle_format();
    art.write("mesh.node", &node)?;
    art.write("mesh.ele", &ele)?;
    let sim = BisweepSimulator::new(&phantom, &map, mesh)?;
    let clean = sim.simulate(&electrodes)?;
    log::info!("simulated {} electrodes, max |ς| = {:.6e}", cfg.electrodes, clean.max_abs());
    let data = if cfg.noise > 0.0 {
        art.write("bisweep_clean.csv", &clean.to_csv())?;
        add_noise(&clean, cfg.noise, cfg.seed_or_zero())?
    } else {
        clean.clone()
    };
    art.write("bisweep.csv", &data.to_csv())?;
    let outputs = art.finish("simulate", cfg, cfg.seed.into_iter().collect())?;
    Ok(SimulationOutput { clean, data, outputs })
}

fn reconstruct_into(
    art: &mut Artifacts,
    data: &BisweepMatrix,
    map: &dyn ConformalMap,
    cfg: &ExperimentConfig,
    stem: &str,
) -> Result<ReconstructionGrid> {
    let lambda = bisweep_to_ntd(data, cfg.order)?;
    art.write(&format!("{stem}ntd.csv"), &lambda.to_csv())?;
    let grid = reconstruct(&lambda, map, &cfg.reconstruction_params())?;
    art.write(&format!("{stem}reconstruction.csv"), &grid.to_csv())?;
    art.write(&format!("{stem}reconstruction.pgm"), &grid.to_pgm())?;
    Ok(grid)
}

/// Reconstruct from a bisweep CSV using a freshly built map of the config's domain.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, csv: &Path) -> Result<ReconstructionGrid> {
    cfg.validate()?;
    let text = fs::read_to_string(csv).map_err(|e| Error::io(csv, e))?;
    let data = BisweepMatrix::from_csv(&text)?;
    if data.n() != cfg.electrodes {
        return Err(Error::Dimension(format!("CSV has {} electrodes, config expects {}", data.n(), cfg.electrodes)));
    }
    let phantom = cfg.phantom()?;
    let map = SchwarzChristoffelMap::build(phantom.domain(), &MapNormalization::default())?;
    let mut art = Artifacts::new(&cfg.out);
    let grid = reconstruct_into(&mut art, &data, &map, cfg, "")?;
    art.finish("reconstruct", cfg, vec![])?;
    Ok(grid)
}

/// Simulate then reconstruct on the same domain, noiseless unless configured otherwise.
pub fn cmd_example1(cfg: &ExperimentConfig) -> Result<(BisweepMatrix, ReconstructionGrid)> {
    let sim = cmd_simulate(cfg)?;
    let phantom = cfg.phantom()?;
    // independent map instance for the inverse step
    let map = SchwarzChristoffelMap::build(phantom.domain(), &MapNormalization::default())?;
    let mut art = Artifacts::new(&cfg.out);
    let grid = reconstruct_into(&mut art, &sim.data, &map, cfg, "")?;
    art.finish("example1", cfg, cfg.seed.into_iter().collect())?;
    Ok((sim.data, grid))
}

/// Output of the perturbed, noisy example.
#[derive(Debug, Clone)]
pub struct Example2Output {
    pub perturbed: Phantom,
    pub clean: BisweepMatrix,
    pub noisy: Vec<BisweepMatrix>,
    pub reconstructions: Vec<ReconstructionGrid>,
    pub outputs: BTreeMap<String, String>,
}

/// Simulate on a perturbed domain D′ at displaced electrodes, add noise, and
/// reconstruct as if the data came from D at the nominal electrodes.
/// With `with_sweep` the three sweep profiles are also written.
pub fn cmd_example2(cfg: &ExperimentConfig, with_sweep: bool) -> Result<Example2Output> {
    cfg.validate()?;
    let seed = cfg.seed_or_zero();
    let phantom = cfg.phantom()?;
    let map = map_with_cache(phantom.domain(), None)?;
    let nominal = map.electrode_positions(cfg.electrodes)?;
    let (perturbed, rule) = perturb_geometry(&phantom, cfg.perturb, seed, PhantomOptions::default())?;
    let map_p = SchwarzChristoffelMap::build(perturbed.domain(), &MapNormalization::default())?;
    let moved = rule.apply(&nominal.iter().map(|e| e.point()).collect::<Vec<_>>());
    let electrodes_p: Vec<Electrode> = moved.iter().map(|&bp| electrode_at(&map_p, bp)).collect::<Result<_>>()?;
    let sim_p = BisweepSimulator::new(&perturbed, &map_p, generate_mesh(&perturbed, cfg.mesh_h)?)?;
    let clean = sim_p.simulate(&electrodes_p)?;

    let mut art = Artifacts::new(&cfg.out);
    art.write("perturbed_phantom.json", &(serde_json::to_string_pretty(&perturbed.to_file()).expect("serializes") + "\n"))?;
    art.write("bisweep_perturbed_clean.csv", &clean.to_csv())?;
    let seeds: Vec<u64> = (0..cfg.samples as u64).map(|k| seed.wrapping_add(k)).collect();
    let mut noisy = Vec::new();
    let mut reconstructions = Vec::new();
    for (k, &s) in seeds.iter().enumerate() {
        // the reconstruction treats ς′ as data from D at the nominal electrodes
        let data = add_noise(&clean, cfg.noise, s)?;
        art.write(&format!("sample{k}_bisweep.csv"), &data.to_csv())?;
        let grid = reconstruct_into(&mut art, &data, &map, cfg, &format!("sample{k}_"))?;
        noisy.push(data);
        reconstructions.push(grid);
    }
    if with_sweep {
        let sim = BisweepSimulator::new(&phantom, &map, generate_mesh(&phantom, cfg.mesh_h)?)?;
        let thetas: Vec<f64> = (0..cfg.sweep_samples).map(|j| 2.0 * PI * j as f64 / cfg.sweep_samples as f64).collect();
        let ideal = sim.sweep(nominal[0].disk_angle, &thetas)?;
        // the same nominal parameter, pushed to the closest point of ∂D′
        let angles_p: Vec<f64> = thetas
            .iter()
            .map(|&t| {
                let x = map.from_disk(crate::geometry::pt(t.cos(), t.sin()))?;
                Ok(electrode_at(&map_p, perturbed.domain().closest_boundary_point(x))?.disk_angle)
            })
            .collect::<Result<_>>()?;
        let pert = sim_p.sweep(electrodes_p[0].disk_angle, &angles_p)?;
        let mut text = String::from("series,theta,value\n");
        for (t, v) in thetas.iter().zip(&ideal) {
            text += &format!("ideal,{t},{v}\n");
        }
        for (t, v) in thetas.iter().zip(&pert) {
            text += &format!("perturbed,{t},{v}\n");
        }
        for (e, v) in nominal.iter().zip(noisy[0].row(0)) {
            text += &format!("noisy,{},{v}\n", e.disk_angle);
        }
        art.write("sweep.csv", &text)?;
    }
    let outputs = art.finish("example2", cfg, seeds)?;
    Ok(Example2Output { perturbed, clean, noisy, reconstructions, outputs })
}

/// ς(x₁, ·) on the config's phantom, sampled at equispaced disk angles.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let phantom = cfg.phantom()?;
    let map = map_with_cache(phantom.domain(), Some(&cfg.out.join("map_cache.json")))?;
    let sim = BisweepSimulator::new(&phantom, &map, generate_mesh(&phantom, cfg.mesh_h)?)?;
    let thetas: Vec<f64> = (0..cfg.sweep_samples).map(|j| 2.0 * PI * j as f64 / cfg.sweep_samples as f64).collect();
    let values = sim.sweep(0.0, &thetas)?;
    let mut art = Artifacts::new(&cfg.out);
    art.write("sweep.csv", &crate::pipeline::sweep_to_csv(&thetas, &values))?;
    art.finish("sweep", cfg, vec![])?;
    Ok(thetas.into_iter().zip(values).collect())
}
