//! Build directories: matrices, schedule echo and manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fanlab::build::Build;
use fanlab::hypercyclic::Calibration;
use fanlab::mmio::{write_matrix, MmValue};
use fanlab::profiles;
use fanlab::scalar::Exact;
use fanlab::schedule::{ScalarField, ScheduleConfig, StageSchedule, WeightMode};
use fanlab::sparse::SparseCols;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.toml";
pub const SCHEDULE: &str = "schedule.toml";
const MATRICES: [&str; 3] = ["F_in_E.mtx", "E_in_F.mtx", "T.mtx"];

/// A build in whichever scalar its schedule asks for: exact rationals for
/// real dyadic weights, doubles or complex doubles otherwise.
pub enum AnyBuild {
    Real(Build<f64>),
    Complex(Build<Complex64>),
    Exact(Build<Exact>),
}

#[macro_export]
macro_rules! with_build {
    ($any:expr, $b:ident => $body:expr) => {
        match $any {
            $crate::artifacts::AnyBuild::Real($b) => $body,
            $crate::artifacts::AnyBuild::Complex($b) => $body,
            $crate::artifacts::AnyBuild::Exact($b) => $body,
        }
    };
}

impl AnyBuild {
    pub fn new(s: StageSchedule) -> Result<AnyBuild> {
        Ok(match (s.scalar_field, s.weight_mode) {
            (ScalarField::Complex, _) => AnyBuild::Complex(Build::new(s)?),
            (ScalarField::Real, WeightMode::Float) => AnyBuild::Real(Build::new(s)?),
            (ScalarField::Real, WeightMode::RationalApprox) => AnyBuild::Exact(Build::new(s)?),
        })
    }

    pub fn scalar_name(&self) -> &'static str {
        match self {
            AnyBuild::Real(_) => "f64",
            AnyBuild::Complex(_) => "complex64",
            AnyBuild::Exact(_) => "exact",
        }
    }

    pub fn schedule(&self) -> &StageSchedule {
        with_build!(self, b => &b.schedule)
    }

    pub fn n_trunc(&self) -> usize {
        with_build!(self, b => b.n_trunc())
    }

    fn matrices(&self) -> [FileRecord; 3] {
        fn rec<S: MmValue>(name: &str, m: &SparseCols<S>) -> FileRecord {
            let mut h = Sha256::new();
            write_matrix(m, &mut h).expect("hashing does not fail");
            FileRecord { name: name.into(), rows: m.n_rows(), cols: m.n_cols(), nnz: m.nnz(), sha256: hex::encode(h.finalize()) }
        }
        with_build!(self, b => [
            rec(MATRICES[0], &b.basis.f_in_e),
            rec(MATRICES[1], &b.basis.e_in_f),
            rec(MATRICES[2], &b.t.matrix),
        ])
    }

    fn write_matrices(&self, dir: &Path) -> Result<()> {
        fn write<S: MmValue>(path: PathBuf, m: &SparseCols<S>) -> Result<()> {
            let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            write_matrix(m, &mut w)?;
            w.flush()?;
            Ok(())
        }
        with_build!(self, b => {
            write(dir.join(MATRICES[0]), &b.basis.f_in_e)?;
            write(dir.join(MATRICES[1]), &b.basis.e_in_f)?;
            write(dir.join(MATRICES[2]), &b.t.matrix)?;
        });
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub source: String,
    pub scalar: String,
    pub n_trunc: usize,
    pub n_stages: usize,
    #[serde(rename = "calibration")]
    pub calibrations: Vec<Calibration>,
    #[serde(rename = "file")]
    pub files: Vec<FileRecord>,
}

/// Reads a config from a path, or a built-in profile when no such file
/// exists and the name matches one.
pub fn read_config(arg: &str) -> Result<(ScheduleConfig, String)> {
    let path = Path::new(arg);
    let text = if path.exists() {
        fs::read_to_string(path).with_context(|| format!("reading {arg}"))?
    } else if profiles::NAMES.contains(&arg) {
        profiles::profile_text(arg)?.to_string()
    } else {
        bail!("config {arg:?} is neither a file nor a built-in profile ({})", profiles::NAMES.join(", "));
    };
    Ok((ScheduleConfig::from_toml(&text)?, arg.to_string()))
}

pub fn write_build(config: &ScheduleConfig, source: &str, dir: &Path) -> Result<Manifest> {
    let (schedule, calibrations) = profiles::resolve(config)?;
    let build = AnyBuild::new(schedule)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    build.write_matrices(dir)?;
    fs::write(dir.join(SCHEDULE), build.schedule().to_config().to_toml())?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        source: source.into(),
        scalar: build.scalar_name().into(),
        n_trunc: build.n_trunc(),
        n_stages: build.schedule().n_stages(),
        calibrations,
        files: build.matrices().to_vec(),
    };
    fs::write(dir.join(MANIFEST), toml::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Rebuilds from the schedule echo and checks the result against the
/// manifest hashes.
pub fn load_build(dir: &Path) -> Result<(AnyBuild, Manifest)> {
    let manifest: Manifest = toml::from_str(
        &fs::read_to_string(dir.join(MANIFEST)).with_context(|| format!("no build manifest in {}", dir.display()))?,
    )
    .context("parsing manifest")?;
    let config = ScheduleConfig::from_toml(&fs::read_to_string(dir.join(SCHEDULE)).context("reading schedule echo")?)?;
    let (schedule, _) = profiles::resolve(&config)?;
    let build = AnyBuild::new(schedule)?;
    let now = build.matrices();
    for rec in &manifest.files {
        match now.iter().find(|r| r.name == rec.name) {
            Some(r) if r == rec => {}
            _ => bail!("{} in {} does not match a rebuild; rerun `build`", rec.name, dir.display()),
        }
    }
    Ok((build, manifest))
}
