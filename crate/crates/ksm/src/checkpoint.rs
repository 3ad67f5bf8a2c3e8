//! Model checkpoints: JSON with base64-encoded little-endian f64 arrays.
//!
//! The file layout is versioned by a `format` tag. Matrices are stored
//! row-major, so checkpoints are portable across linear-algebra backends
//! regardless of in-memory layout. Saving is deterministic: the same state
//! always produces the same bytes, which makes replay tests exact.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{LandmarkSet, LandmarkSource};
use crate::error::{KsmError, Result};
use crate::kernel::Kernel;
use crate::model::ModelState;

const MODEL_FORMAT: &str = "ksm-checkpoint-v1";
const LANDMARK_FORMAT: &str = "ksm-landmarks-v1";

/// A model state plus the seeds that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub seed_history: Vec<u64>,
    /// Free-form producer note (e.g. a run's config hash); not interpreted.
    pub provenance: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    n: usize,
    m: usize,
    lambda: f64,
    kernel: Kernel,
    seed_history: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    w: String,
    q: String,
    l: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkFile {
    format: String,
    n: usize,
    m: usize,
    source: LandmarkSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    w: String,
}

fn encode_f64s(values: impl Iterator<Item = f64>) -> String {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

fn encode_matrix_row_major(m: &DMatrix<f64>) -> String {
    encode_f64s((0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|ij| m[ij]))
}

fn decode_f64s(s: &str, expect: usize, field: &str) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(s)
        .map_err(|e| KsmError::Checkpoint(format!("field {field}: invalid base64: {e}")))?;
    if bytes.len() != expect * 8 {
        return Err(KsmError::Checkpoint(format!(
            "field {field}: expected {} bytes ({expect} f64 values), got {}",
            expect * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks_exact(8)")))
        .collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(KsmError::Checkpoint(format!(
            "field {field}: non-finite value {bad}"
        )));
    }
    Ok(values)
}

/// Saves a model state and its seed history as pretty-printed JSON.
pub fn save(state: &ModelState, seed_history: &[u64], path: &Path) -> Result<()> {
    save_with_provenance(state, seed_history, None, path)
}

/// [`save`], with an optional free-form provenance note embedded in the file.
pub fn save_with_provenance(
    state: &ModelState,
    seed_history: &[u64],
    provenance: Option<&str>,
    path: &Path,
) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        n: state.n(),
        m: state.m(),
        lambda: state.lambda,
        kernel: state.kernel,
        seed_history: seed_history.to_vec(),
        provenance: provenance.map(str::to_string),
        w: encode_matrix_row_major(&state.w),
        q: encode_f64s(state.q.iter().copied()),
        l: encode_matrix_row_major(&state.l),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Loads and validates a model checkpoint.
pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.format != MODEL_FORMAT {
        return Err(KsmError::Checkpoint(format!(
            "unsupported checkpoint format {:?} (expected {MODEL_FORMAT:?})",
            file.format
        )));
    }
    if file.n == 0 || file.m == 0 {
        return Err(KsmError::Checkpoint(format!(
            "checkpoint dimensions must be >= 1, got N={}, M={}",
            file.n, file.m
        )));
    }
    if !(file.lambda.is_finite() && file.lambda >= 0.0) {
        return Err(KsmError::Checkpoint(format!(
            "checkpoint lambda must be finite and >= 0, got {}",
            file.lambda
        )));
    }
    let w = decode_f64s(&file.w, file.n * file.m, "w")?;
    let q = decode_f64s(&file.q, file.n, "q")?;
    let l = decode_f64s(&file.l, file.n * file.n, "l")?;
    Ok(Checkpoint {
        state: ModelState {
            w: DMatrix::from_row_slice(file.n, file.m, &w),
            q: DVector::from_vec(q),
            l: DMatrix::from_row_slice(file.n, file.n, &l),
            lambda: file.lambda,
            kernel: file.kernel,
        },
        seed_history: file.seed_history,
        provenance: file.provenance,
    })
}

/// Saves a landmark set in the same encoding, with its source recorded.
pub fn save_landmarks(set: &LandmarkSet, path: &Path) -> Result<()> {
    save_landmarks_with_provenance(set, None, path)
}

/// [`save_landmarks`], with an optional provenance note embedded in the file.
pub fn save_landmarks_with_provenance(
    set: &LandmarkSet,
    provenance: Option<&str>,
    path: &Path,
) -> Result<()> {
    let file = LandmarkFile {
        format: LANDMARK_FORMAT.to_string(),
        n: set.w.nrows(),
        m: set.w.ncols(),
        source: set.source,
        provenance: provenance.map(str::to_string),
        w: encode_matrix_row_major(&set.w),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Loads and validates a landmark set.
pub fn load_landmarks(path: &Path) -> Result<LandmarkSet> {
    let text = fs::read_to_string(path)?;
    let file: LandmarkFile = serde_json::from_str(&text)?;
    if file.format != LANDMARK_FORMAT {
        return Err(KsmError::Checkpoint(format!(
            "unsupported landmark format {:?} (expected {LANDMARK_FORMAT:?})",
            file.format
        )));
    }
    let w = decode_f64s(&file.w, file.n * file.m, "w")?;
    LandmarkSet::new(DMatrix::from_row_slice(file.n, file.m, &w), file.source)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_state() -> ModelState {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = ModelState::init(3, 4, Kernel::power_cosine(3).unwrap(), 0.001, 17);
        for i in 0..3 {
            s.q[i] = rng.random_range(0.1..2.0);
            for j in 0..3 {
                s.l[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        s
    }

    #[test]
    fn model_round_trip_is_exact_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let state = sample_state();
        save(&state, &[17, 3], &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.state, state);
        assert_eq!(loaded.seed_history, vec![17, 3]);

        // Same state, same bytes; load→save is the identity on bytes.
        let first = fs::read(&path).unwrap();
        save(&state, &[17, 3], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        let path2 = dir.path().join("model2.json");
        save(&loaded.state, &loaded.seed_history, &path2).unwrap();
        assert_eq!(fs::read(&path2).unwrap(), first);
    }

    #[test]
    fn provenance_is_optional_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let state = sample_state();

        save(&state, &[17], &path).unwrap();
        assert!(load(&path).unwrap().provenance.is_none());
        assert!(!fs::read_to_string(&path).unwrap().contains("provenance"));

        save_with_provenance(&state, &[17], Some("config_hash=abc seed=17"), &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.provenance.as_deref(), Some("config_hash=abc seed=17"));
        assert_eq!(loaded.state, state);
    }

    #[test]
    fn corrupted_files_are_rejected_with_the_failing_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let state = sample_state();
        save(&state, &[1], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();

        // Wrong format tag.
        fs::write(&path, text.replace("ksm-checkpoint-v1", "ksm-checkpoint-v0")).unwrap();
        match load(&path) {
            Err(KsmError::Checkpoint(msg)) => assert!(msg.contains("format"), "{msg}"),
            other => panic!("expected Checkpoint error, got {other:?}"),
        }

        // Dimension that disagrees with the payload length.
        fs::write(&path, text.replace("\"n\": 3", "\"n\": 4")).unwrap();
        match load(&path) {
            Err(KsmError::Checkpoint(msg)) => assert!(msg.contains("field w"), "{msg}"),
            other => panic!("expected Checkpoint error, got {other:?}"),
        }

        // Unknown key.
        fs::write(&path, text.replace("\"n\": 3", "\"n\": 3, \"extra\": 1")).unwrap();
        assert!(matches!(load(&path), Err(KsmError::Json(_))));

        // Broken base64 payload.
        fs::write(&path, text.replace("\"q\": \"", "\"q\": \"!!!")).unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn landmark_round_trip_preserves_the_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("landmarks.json");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0f64));
        for source in [
            LandmarkSource::UniformSample,
            LandmarkSource::KMeans,
            LandmarkSource::LearnedHebbian,
        ] {
            let set = LandmarkSet::new(w.clone(), source).unwrap();
            save_landmarks(&set, &path).unwrap();
            let loaded = load_landmarks(&path).unwrap();
            assert_eq!(loaded, set);
        }
    }

    #[test]
    fn row_major_encoding_is_layout_independent() {
        // A matrix and its transpose-of-transpose share bytes; more to the
        // point, the first 8 encoded bytes are row 0 / column 0.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = BASE64.decode(encode_matrix_row_major(&m)).unwrap();
        let first = f64::from_le_bytes(bytes[0..8].try_into().unwrap());
        let second = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        assert_eq!(first, 1.0);
        assert_eq!(second, 2.0, "row-major: entry (0,1) comes second");
    }
}
