//! Eigen tables cached under `$COULOMB_CACHE_DIR`, one file per
//! `(manifold, cutoff)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use coulomb_core::{ManifoldId, SpectralModel};

use crate::{CliError, CliResult};

pub const CACHE_ENV: &str = "COULOMB_CACHE_DIR";

pub fn table_path(dir: &std::path::Path, m: ManifoldId, cutoff: usize) -> PathBuf {
    dir.join(format!("{m}-{cutoff}.spec1"))
}

/// The default model for `m`, read from the cache when a table exists there
/// and written to it otherwise. Without the variable, nothing is cached.
pub fn load_model(m: ManifoldId) -> CliResult<SpectralModel> {
    let fresh = SpectralModel::new(m);
    let Some(dir) = std::env::var_os(CACHE_ENV).map(PathBuf::from) else {
        return Ok(fresh);
    };
    let path = table_path(&dir, m, fresh.eigen_cutoff());
    if path.exists() {
        let file = File::open(&path)?;
        let model = SpectralModel::load_eigen_table(BufReader::new(file), None)
            .map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
        if model.manifold() != m || model.eigen_cutoff() != fresh.eigen_cutoff() {
            return Err(CliError::Failure(format!(
                "{}: table is for {} with cutoff {}",
                path.display(),
                model.manifold(),
                model.eigen_cutoff()
            )));
        }
        return Ok(model);
    }
    std::fs::create_dir_all(&dir)?;
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(File::create(&tmp)?);
    fresh.dump_eigen_table(&mut w)?;
    w.flush()?;
    drop(w);
    std::fs::rename(&tmp, &path)?;
    Ok(fresh)
}
