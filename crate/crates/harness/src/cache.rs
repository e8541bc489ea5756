//! Binary spectrum cache.
//!
//! Layout (little endian): magic `THLB`, format version `u32`, dimension
//! `u64`, `dim` eigenvalues as `f64`, the eigenvector matrix column-major as
//! interleaved `(re, im)` pairs, then the SHA-256 digest of everything before it.

use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use sha2::{Digest, Sha256};

use thermalab_core::hamiltonian::{HermitianOperator, ModelSpec};
use thermalab_core::linalg::c64;
use thermalab_core::spectrum::{Spectrum, DEFAULT_DEGENERACY_RTOL};

use crate::config::canonical_hash;
use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"THLB";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const DIGEST_LEN: usize = 32;

pub fn encode(spectrum: &Spectrum) -> Vec<u8> {
    let n = spectrum.dim();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * n + 16 * n * n + DIGEST_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    for &e in spectrum.energies() {
        buf.extend_from_slice(&e.to_le_bytes());
    }
    let v = spectrum.vectors();
    for j in 0..n {
        for i in 0..n {
            buf.extend_from_slice(&v[(i, j)].re.to_le_bytes());
            buf.extend_from_slice(&v[(i, j)].im.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

/// Raw arrays from a cache file, digest verified.
pub fn decode(bytes: &[u8]) -> Result<(Vec<f64>, Mat<c64>)> {
    let corrupt = |m: &str| HarnessError::CacheCorrupt(m.to_string());
    if bytes.len() < HEADER_LEN + DIGEST_LEN {
        return Err(corrupt("file shorter than header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(HarnessError::CacheCorrupt(format!("unsupported format version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let expected = n
        .checked_mul(n)
        .and_then(|nn| nn.checked_mul(16))
        .and_then(|m| m.checked_add(8 * n + (HEADER_LEN + DIGEST_LEN) as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(HarnessError::CacheCorrupt(format!("length {} does not match dimension {n}", bytes.len())));
    }
    let n = n as usize;
    let (payload, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(corrupt("digest mismatch"));
    }
    let f = |k: usize| f64::from_le_bytes(payload[k..k + 8].try_into().unwrap());
    let energies: Vec<f64> = (0..n).map(|i| f(HEADER_LEN + 8 * i)).collect();
    let base = HEADER_LEN + 8 * n;
    let vectors = Mat::from_fn(n, n, |i, j| {
        let k = base + 16 * (j * n + i);
        c64::new(f(k), f(k + 8))
    });
    Ok((energies, vectors))
}

/// Spectra keyed by the hash of the model they came from.
#[derive(Clone, Debug)]
pub struct SpectrumCache {
    dir: PathBuf,
}

impl SpectrumCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn path_for(&self, model: &ModelSpec) -> PathBuf {
        self.dir.join(format!("{}.thlb", key(model)))
    }

    pub fn store(&self, model: &ModelSpec, spectrum: &Spectrum) -> Result<PathBuf> {
        let path = self.path_for(model);
        let tmp = path.with_extension("thlb.tmp");
        fs::write(&tmp, encode(spectrum)).map_err(|e| HarnessError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }

    /// `Ok(None)` on a miss. A present but damaged file is an error; the
    /// loaded spectrum is also checked against `h`.
    pub fn load(&self, model: &ModelSpec, h: &HermitianOperator) -> Result<Option<Spectrum>> {
        let path = self.path_for(model);
        if !path.exists() {
            return Ok(None);
        }
        load_file(&path, h).map(Some)
    }
}

pub fn load_file(path: &Path, h: &HermitianOperator) -> Result<Spectrum> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let (energies, vectors) = decode(&bytes)?;
    if energies.len() != h.dim() {
        return Err(HarnessError::CacheCorrupt(format!(
            "{}: dimension {} does not match Hamiltonian {}",
            path.display(),
            energies.len(),
            h.dim()
        )));
    }
    let mut s = Spectrum::from_parts(energies, vectors, DEFAULT_DEGENERACY_RTOL)
        .map_err(|e| HarnessError::CacheCorrupt(format!("{}: {e}", path.display())))?;
    s.verify_against(h.as_ref())
        .map_err(|e| HarnessError::CacheCorrupt(format!("{}: residual check failed: {e}", path.display())))?;
    Ok(s)
}

pub fn key(model: &ModelSpec) -> String {
    canonical_hash(&(model, DEFAULT_DEGENERACY_RTOL, FORMAT_VERSION))
}

#[cfg(test)]
mod tests {
    use super::*;
    use thermalab_core::hamiltonian::build_hamiltonian;
    use thermalab_core::spectrum::diagonalize;

    fn sample() -> (ModelSpec, HermitianOperator, Spectrum) {
        let m = ModelSpec::default_chain(4);
        let h = build_hamiltonian(&m).unwrap().operator;
        let s = diagonalize(&h).unwrap();
        (m, h, s)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let (m, h, s) = sample();
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrumCache::new(dir.path()).unwrap();
        assert!(cache.load(&m, &h).unwrap().is_none());
        cache.store(&m, &s).unwrap();
        let t = cache.load(&m, &h).unwrap().unwrap();
        for (a, b) in s.energies().iter().zip(t.energies()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let (v, w) = (s.vectors(), t.vectors());
        for j in 0..s.dim() {
            for i in 0..s.dim() {
                assert_eq!(v[(i, j)].re.to_bits(), w[(i, j)].re.to_bits());
                assert_eq!(v[(i, j)].im.to_bits(), w[(i, j)].im.to_bits());
            }
        }
    }

    #[test]
    fn damaged_files_are_rejected() {
        let (m, h, s) = sample();
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrumCache::new(dir.path()).unwrap();
        let path = cache.store(&m, &s).unwrap();
        let bytes = fs::read(&path).unwrap();

        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(cache.load(&m, &h), Err(HarnessError::CacheCorrupt(_))));

        let mut flipped = bytes.clone();
        flipped[HEADER_LEN + 3] ^= 1;
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(cache.load(&m, &h), Err(HarnessError::CacheCorrupt(_))));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        fs::write(&path, &magic).unwrap();
        assert!(matches!(cache.load(&m, &h), Err(HarnessError::CacheCorrupt(_))));
    }

    #[test]
    fn valid_digest_with_wrong_hamiltonian_fails_residual() {
        let (m, _, s) = sample();
        let other = build_hamiltonian(&m.scaled(2.0)).unwrap().operator;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.thlb");
        fs::write(&path, encode(&s)).unwrap();
        assert!(matches!(load_file(&path, &other), Err(HarnessError::CacheCorrupt(_))));
    }
}
