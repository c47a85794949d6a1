//! Content-addressed on-disk cache of [`CorrectorSet`]s.
//!
//! An entry is a directory named by the SHA-256 of `(spec, coeff, h)`
//! holding the full cell mesh as mesh files, one little-endian `f64` file
//! per nodal or element array, and `manifest.json` with `Â`, `θ`, the
//! residual diagnostics and a checksum of every array.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell::{build_corrector_set_on, CellDiagnostics, CorrectorSet, EffectiveTensor};
use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::io::{read_mesh, write_mesh};
use crate::fem::mesh::mesh_unit_cell_full;
use crate::fem::FieldOnMesh;
use crate::geometry::PerforationSpec;

/// Bumped whenever the stored layout or the cell algorithms change.
pub const FORMAT_VERSION: u32 = 1;
/// Cached solves with a relative residual above this are recomputed.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

const MANIFEST: &str = "manifest.json";
const MESH_STEM: &str = "cell";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Miss,
    /// An entry existed but failed validation.
    Recomputed,
}

#[derive(Serialize)]
struct KeyInput<'a> {
    version: u32,
    spec: &'a PerforationSpec,
    coeff: &'a CoefficientField,
    h_bits: u64,
}

/// Hex SHA-256 of the cache key.
pub fn cache_key(spec: &PerforationSpec, coeff: &CoefficientField, h: f64) -> String {
    let input = KeyInput { version: FORMAT_VERSION, spec, coeff, h_bits: h.to_bits() };
    let bytes = serde_json::to_vec(&input).expect("key input serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayEntry {
    file: String,
    /// Number of fields stored back to back.
    fields: usize,
    components: usize,
    len: usize,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    key: String,
    spec: PerforationSpec,
    coeff: CoefficientField,
    h: f64,
    theta: f64,
    a_hat: EffectiveTensor,
    diagnostics: CellDiagnostics,
    chi: ArrayEntry,
    flux_potential: ArrayEntry,
    flux: ArrayEntry,
    psi: ArrayEntry,
}

fn to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn from_bytes(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_array(dir: &Path, name: &str, fields: &[&FieldOnMesh]) -> Result<ArrayEntry> {
    let components = fields.first().map_or(1, |f| f.components);
    let flat: Vec<f64> = fields.iter().flat_map(|f| f.values.iter().copied()).collect();
    write_raw(dir, name, &flat, fields.len(), components)
}

fn write_raw(dir: &Path, name: &str, values: &[f64], fields: usize, components: usize) -> Result<ArrayEntry> {
    let bytes = to_bytes(values);
    let file = format!("{name}.f64");
    fs::write(dir.join(&file), &bytes)?;
    Ok(ArrayEntry { file, fields, components, len: values.len(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

fn read_array(dir: &Path, entry: &ArrayEntry) -> Result<Vec<f64>> {
    let bytes = fs::read(dir.join(&entry.file))?;
    if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
        return Err(Error::Cache(format!("checksum mismatch in {}", entry.file)));
    }
    let values = from_bytes(&bytes).ok_or_else(|| Error::Cache(format!("{} is not an f64 array", entry.file)))?;
    if values.len() != entry.len {
        return Err(Error::Cache(format!("{} holds {} values, manifest says {}", entry.file, values.len(), entry.len)));
    }
    Ok(values)
}

fn split_fields(values: Vec<f64>, entry: &ArrayEntry, mesh: &Arc<crate::fem::mesh::TriMesh>) -> Result<Vec<FieldOnMesh>> {
    let per = entry.components * mesh.num_nodes();
    if entry.fields * per != values.len() {
        return Err(Error::Cache(format!("{} does not match the cached mesh", entry.file)));
    }
    Ok(values.chunks_exact(per.max(1)).map(|c| FieldOnMesh::new(mesh.clone(), entry.components, c.to_vec())).collect())
}

/// The cache rooted at one directory.
#[derive(Debug, Clone)]
pub struct CellCache {
    pub root: PathBuf,
}

impl CellCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CellCache { root: root.into() }
    }

    pub fn entry_dir(&self, key: &str) -> PathBuf {
        self.root.join(key)
    }

    /// Returns the cached set or builds and stores it.
    pub fn get_or_build(&self, spec: &PerforationSpec, coeff: &CoefficientField, h: f64) -> Result<(CorrectorSet, CacheStatus)> {
        let key = cache_key(spec, coeff, h);
        let dir = self.entry_dir(&key);
        let status = if dir.join(MANIFEST).exists() {
            match self.load(&dir, &key, spec, coeff, h) {
                Ok(set) => {
                    info!("cell cache hit {key}");
                    return Ok((set, CacheStatus::Hit));
                }
                Err(e) => {
                    warn!("discarding cell cache entry {key}: {e}; recomputing");
                    CacheStatus::Recomputed
                }
            }
        } else {
            info!("cell cache miss {key}");
            CacheStatus::Miss
        };
        let full = Arc::new(mesh_unit_cell_full(spec, h)?);
        let set = build_corrector_set_on(spec, coeff, h, full)?;
        if let Err(e) = self.store(&dir, &key, &set) {
            warn!("could not write cell cache entry {key}: {e}");
        }
        Ok((set, status))
    }

    fn store(&self, dir: &Path, key: &str, set: &CorrectorSet) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        // stage in a sibling directory so a crashed write never looks valid
        let staging = self.root.join(format!(".{key}.{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        write_mesh(&set.full_mesh, &staging, MESH_STEM)?;
        let chi = write_array(&staging, "chi", &set.chi.iter().collect::<Vec<_>>())?;
        let flux_potential = write_array(&staging, "flux_potential", &set.flux_potential.iter().collect::<Vec<_>>())?;
        let flux = write_raw(&staging, "flux", &set.flux, 1, 32)?;
        let psi = write_array(&staging, "psi", &[&set.psi])?;
        let manifest = Manifest {
            version: FORMAT_VERSION,
            key: key.into(),
            spec: set.spec,
            coeff: set.coeff,
            h: set.h,
            theta: set.theta,
            a_hat: set.a_hat,
            diagnostics: set.diagnostics,
            chi,
            flux_potential,
            flux,
            psi,
        };
        fs::write(staging.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir)?;
        Ok(())
    }

    fn load(&self, dir: &Path, key: &str, spec: &PerforationSpec, coeff: &CoefficientField, h: f64) -> Result<CorrectorSet> {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)
            .map_err(|e| Error::Cache(format!("unreadable manifest: {e}")))?;
        if m.version != FORMAT_VERSION || m.key != key || m.spec != *spec || m.coeff != *coeff || m.h.to_bits() != h.to_bits() {
            return Err(Error::Cache("manifest does not match the requested key".into()));
        }
        let d = m.diagnostics;
        for (name, r) in [
            ("chi_residual", d.chi_residual),
            ("flux_potential_residual", d.flux_potential_residual),
            ("psi_residual", d.psi_residual),
        ] {
            if !(r.is_finite() && r <= RESIDUAL_LIMIT) {
                return Err(Error::Cache(format!("{name} = {r:e} exceeds {RESIDUAL_LIMIT:e}")));
            }
        }
        if !(m.theta.is_finite() && m.theta > 0.0 && m.theta <= 1.0) || m.a_hat.entries.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Cache("manifest holds an invalid Â or θ".into()));
        }
        let full = Arc::new(read_mesh(dir, MESH_STEM).map_err(|e| Error::Cache(format!("mesh: {e}")))?);
        let cell = Arc::new(full.material_submesh()?);
        let chi = split_fields(read_array(dir, &m.chi)?, &m.chi, &cell)?;
        let flux_potential = split_fields(read_array(dir, &m.flux_potential)?, &m.flux_potential, &full)?;
        let flux = read_array(dir, &m.flux)?;
        if flux.len() != 32 * full.num_elements() {
            return Err(Error::Cache("flux array does not match the cached mesh".into()));
        }
        let psi = split_fields(read_array(dir, &m.psi)?, &m.psi, &full)?
            .pop()
            .ok_or_else(|| Error::Cache("missing Ψ".into()))?;
        if chi.len() != 4 || flux_potential.len() != 16 {
            return Err(Error::Cache("wrong number of cached fields".into()));
        }
        Ok(CorrectorSet {
            spec: m.spec,
            coeff: m.coeff,
            h: m.h,
            full_mesh: full,
            cell_mesh: cell,
            chi,
            theta: m.theta,
            a_hat: m.a_hat,
            flux_potential,
            flux,
            psi,
            diagnostics: m.diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PerforationSpec {
        PerforationSpec::disk(0.25)
    }

    fn coeff() -> CoefficientField {
        CoefficientField::isotropic(1.0, 1.0)
    }

    #[test]
    fn key_depends_on_h() {
        assert_ne!(cache_key(&spec(), &coeff(), 0.125), cache_key(&spec(), &coeff(), 0.0625));
        assert_eq!(cache_key(&spec(), &coeff(), 0.125), cache_key(&spec(), &coeff(), 0.125));
    }

    #[test]
    fn warm_run_reproduces_cold_run_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CellCache::new(dir.path());
        let (cold, s1) = cache.get_or_build(&spec(), &coeff(), 0.125).unwrap();
        let (warm, s2) = cache.get_or_build(&spec(), &coeff(), 0.125).unwrap();
        assert_eq!(s1, CacheStatus::Miss);
        assert_eq!(s2, CacheStatus::Hit);
        assert_eq!(cold.a_hat.entries.0.map(f64::to_bits), warm.a_hat.entries.0.map(f64::to_bits));
        assert_eq!(cold.theta.to_bits(), warm.theta.to_bits());
        assert_eq!(cold.flux, warm.flux);
        assert_eq!(cold.full_mesh.nodes, warm.full_mesh.nodes);
        for (a, b) in cold.chi.iter().zip(&warm.chi) {
            assert_eq!(a.values, b.values);
        }
        assert_eq!(cold.psi.values, warm.psi.values);
    }

    #[test]
    fn truncated_array_triggers_recompute() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CellCache::new(dir.path());
        cache.get_or_build(&spec(), &coeff(), 0.125).unwrap();
        let entry = cache.entry_dir(&cache_key(&spec(), &coeff(), 0.125));
        fs::write(entry.join("psi.f64"), [0u8; 5]).unwrap();
        let (_, s) = cache.get_or_build(&spec(), &coeff(), 0.125).unwrap();
        assert_eq!(s, CacheStatus::Recomputed);
        let (_, s) = cache.get_or_build(&spec(), &coeff(), 0.125).unwrap();
        assert_eq!(s, CacheStatus::Hit);
    }
}
