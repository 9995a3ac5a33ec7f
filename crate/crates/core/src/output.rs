//! CSV writers for run outputs and the run manifest.
//!
//! | file                     | header                                  |
//! |--------------------------|-----------------------------------------|
//! | `weights.csv`            | `t,a_00,...,a_{K-1}{K-1},b_00,...`      |
//! | `error.csv`              | `t,E`                                   |
//! | `spatial.csv`            | `t,y1,r1,j,vbulk` (blank vbulk = vacuum) |
//! | `speed_marginal.csv`     | `t,y2,r2`                               |
//! | `density_t<time>.csv`    | `y1,y2,rho`, row-major over cells       |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::basis::WeightMatrices;
use crate::config::GridSpec;
use crate::diagnostics::MacroProfile;
use crate::error::OutputError;
use crate::fk::DensityField;
use crate::stepper::OutputSink;

pub const WEIGHTS_FILE: &str = "weights.csv";
pub const ERROR_FILE: &str = "error.csv";
pub const SPATIAL_FILE: &str = "spatial.csv";
pub const SPEED_MARGINAL_FILE: &str = "speed_marginal.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn density_file_name(t: f64) -> String {
    format!("density_t{t:.4}.csv")
}

struct CsvFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvFile {
    fn create(path: PathBuf, header: &str) -> Result<Self, OutputError> {
        let file = File::create(&path).map_err(|e| OutputError::new(&path, e))?;
        let mut f = Self {
            path,
            out: BufWriter::new(file),
        };
        f.line(header)?;
        Ok(f)
    }

    fn line(&mut self, s: &str) -> Result<(), OutputError> {
        writeln!(self.out, "{s}").map_err(|e| OutputError::new(&self.path, e))
    }

    fn flush(&mut self) -> Result<(), OutputError> {
        self.out
            .flush()
            .map_err(|e| OutputError::new(&self.path, e))
    }
}

/// Writes every output of a run as CSV under one directory.
pub struct CsvSink {
    dir: PathBuf,
    grid: GridSpec,
    weights: CsvFile,
    error: CsvFile,
    spatial: CsvFile,
    speed: CsvFile,
}

impl CsvSink {
    pub fn create(dir: &Path, grid: &GridSpec, k: usize) -> Result<Self, OutputError> {
        std::fs::create_dir_all(dir).map_err(|e| OutputError::new(dir, e))?;
        let names: Vec<String> = ["a", "b"]
            .iter()
            .flat_map(|m| (0..k).flat_map(move |i| (0..k).map(move |j| format!("{m}_{i}{j}"))))
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            grid: grid.clone(),
            weights: CsvFile::create(dir.join(WEIGHTS_FILE), &format!("t,{}", names.join(",")))?,
            error: CsvFile::create(dir.join(ERROR_FILE), "t,E")?,
            spatial: CsvFile::create(dir.join(SPATIAL_FILE), "t,y1,r1,j,vbulk")?,
            speed: CsvFile::create(dir.join(SPEED_MARGINAL_FILE), "t,y2,r2")?,
        })
    }
}

impl OutputSink for CsvSink {
    fn series(&mut self, t: f64, error: f64, weights: &WeightMatrices) -> Result<(), OutputError> {
        let mut row = format!("{t}");
        for w in weights.a_slice().iter().chain(weights.b_slice()) {
            row.push_str(&format!(",{w:e}"));
        }
        self.weights.line(&row)?;
        self.error.line(&format!("{t},{error:e}"))
    }

    fn snapshot(
        &mut self,
        t: f64,
        rho: &DensityField,
        profile: &MacroProfile,
    ) -> Result<(), OutputError> {
        for i in 0..profile.x.len() {
            let vb = profile.vbulk[i]
                .map(|v| format!("{v:e}"))
                .unwrap_or_default();
            self.spatial.line(&format!(
                "{t},{:e},{:e},{:e},{vb}",
                profile.x[i], profile.r1[i], profile.j[i]
            ))?;
        }
        for (v, r) in profile.v.iter().zip(&profile.r2) {
            self.speed.line(&format!("{t},{v:e},{r:e}"))?;
        }
        write_density(&self.dir.join(density_file_name(t)), rho, &self.grid)
    }

    fn finish(&mut self) -> Result<(), OutputError> {
        self.weights.flush()?;
        self.error.flush()?;
        self.spatial.flush()?;
        self.speed.flush()
    }
}

pub fn write_density(path: &Path, rho: &DensityField, grid: &GridSpec) -> Result<(), OutputError> {
    let mut f = CsvFile::create(path.to_path_buf(), "y1,y2,rho")?;
    for i in 0..grid.nx {
        for j in 0..grid.nv {
            f.line(&format!(
                "{:e},{:e},{:e}",
                grid.x(i),
                grid.v(j),
                rho.at(i, j)
            ))?;
        }
    }
    f.flush()
}

/// Hex SHA-256 of the canonical configuration text.
pub fn config_hash(rendered_config: &str) -> String {
    let digest = Sha256::digest(rendered_config.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Data rows (lines after the header) of a text file.
pub fn count_rows(path: &Path) -> Result<usize, OutputError> {
    let f = File::open(path).map_err(|e| OutputError::new(path, e))?;
    let mut n = 0usize;
    for line in BufReader::new(f).lines() {
        line.map_err(|e| OutputError::new(path, e))?;
        n += 1;
    }
    Ok(n.saturating_sub(1))
}

/// Writes `manifest.txt` listing every file in `out_dir` (sorted), its data
/// row count, the configuration hash and the software version.
pub fn emit_manifest(out_dir: &Path, rendered_config: &str) -> Result<PathBuf, OutputError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(out_dir)
        .map_err(|e| OutputError::new(out_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST_FILE))
        .collect();
    files.sort();
    let mut text = format!(
        "version={}\nconfig_sha256={}\n",
        env!("CARGO_PKG_VERSION"),
        config_hash(rendered_config)
    );
    for f in &files {
        let name = f.file_name().unwrap_or_default().to_string_lossy();
        text.push_str(&format!("file={name} rows={}\n", count_rows(f)?));
    }
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| OutputError::new(&path, e))?;
    Ok(path)
}
