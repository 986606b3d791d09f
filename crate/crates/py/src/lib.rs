//! Python bindings: `import zkpath`.

use pyo3::exceptions::{PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyList, PyTuple};

use zkpath_core::aggregation::{self, Mode};
use zkpath_core::backend::BackendId;
use zkpath_core::cost::{self, CostModel, GasModel};
use zkpath_core::merkle::{self, PaddingPolicy};
use zkpath_core::rlp::{self as core_rlp, RlpItem};
use zkpath_core::security::{self, Method};
use zkpath_core::{ingest, mpt, Digest};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn digest(b: &[u8]) -> PyResult<Digest> {
    Digest::from_slice(b).ok_or_else(|| PyValueError::new_err("expected 32 bytes"))
}

fn bytes<'py>(py: Python<'py>, b: &[u8]) -> Bound<'py, PyBytes> {
    PyBytes::new(py, b)
}

#[pyfunction]
fn keccak256<'py>(py: Python<'py>, data: &[u8]) -> Bound<'py, PyBytes> {
    bytes(py, zkpath_core::keccak256(data).as_ref())
}

fn to_item(obj: &Bound<'_, PyAny>) -> PyResult<RlpItem> {
    if let Ok(b) = obj.downcast::<PyBytes>() {
        return Ok(RlpItem::Bytes(b.as_bytes().to_vec()));
    }
    if let Ok(l) = obj.downcast::<PyList>() {
        return l.iter().map(|x| to_item(&x)).collect::<PyResult<_>>().map(RlpItem::List);
    }
    if let Ok(t) = obj.downcast::<PyTuple>() {
        return t.iter().map(|x| to_item(&x)).collect::<PyResult<_>>().map(RlpItem::List);
    }
    Err(PyTypeError::new_err("rlp items must be bytes or lists of items"))
}

fn from_item(py: Python<'_>, item: &RlpItem) -> PyResult<PyObject> {
    match item {
        RlpItem::Bytes(b) => Ok(bytes(py, b).into_any().unbind()),
        RlpItem::List(items) => {
            let objs = items.iter().map(|i| from_item(py, i)).collect::<PyResult<Vec<_>>>()?;
            Ok(PyList::new(py, objs)?.into_any().unbind())
        }
    }
}

#[pyfunction]
fn rlp_encode<'py>(py: Python<'py>, obj: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyBytes>> {
    Ok(bytes(py, &to_item(obj)?.encode()))
}

#[pyfunction]
fn rlp_decode(py: Python<'_>, data: &[u8]) -> PyResult<PyObject> {
    from_item(py, &core_rlp::decode(data).map_err(value_err)?)
}

/// Inclusion path: a leaf hash, ordered authentication steps and the root.
#[pyclass(module = "zkpath")]
#[derive(Clone)]
struct MerklePath {
    inner: merkle::MerklePath,
}

#[pymethods]
impl MerklePath {
    #[getter]
    fn leaf_hash<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        bytes(py, self.inner.leaf_hash.as_ref())
    }

    #[getter]
    fn root<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        bytes(py, self.inner.expected_root.as_ref())
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn native_size(&self) -> usize {
        self.inner.native_size()
    }

    fn verify(&self) -> bool {
        self.inner.verify()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(MerklePath {
            inner: serde_json::from_str(s).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("MerklePath(k={}, root={})", self.inner.len(), self.inner.expected_root)
    }
}

#[pyclass(module = "zkpath")]
struct MerkleTree {
    inner: merkle::MerkleTree,
}

#[pymethods]
impl MerkleTree {
    #[new]
    #[pyo3(signature = (leaves, strict = false))]
    fn new(leaves: Vec<Vec<u8>>, strict: bool) -> PyResult<Self> {
        let policy = if strict {
            PaddingPolicy::RejectNonPowerOfTwo
        } else {
            PaddingPolicy::DuplicateLast
        };
        Ok(MerkleTree {
            inner: merkle::build_tree(&leaves, policy).map_err(value_err)?,
        })
    }

    #[getter]
    fn root<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        bytes(py, self.inner.root().as_ref())
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn path(&self, index: usize) -> PyResult<MerklePath> {
        Ok(MerklePath {
            inner: self.inner.gen_path(index).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.leaf_count
    }
}

#[pyclass(module = "zkpath")]
#[derive(Clone)]
struct MptProof {
    inner: mpt::MptProof,
}

#[pymethods]
impl MptProof {
    #[getter]
    fn key<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        bytes(py, &self.inner.key)
    }

    #[getter]
    fn value<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        bytes(py, &self.inner.value)
    }

    #[getter]
    fn root<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        bytes(py, self.inner.root.as_ref())
    }

    #[getter]
    fn nodes<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyBytes>> {
        self.inner.nodes.iter().map(|n| bytes(py, n)).collect()
    }

    #[getter]
    fn path_len(&self) -> usize {
        self.inner.path_len()
    }

    #[getter]
    fn native_size(&self) -> usize {
        self.inner.native_size()
    }

    /// `None` when the proof verifies, otherwise the rejection reason.
    fn check(&self) -> Option<String> {
        self.inner.verify().err().map(|r| r.to_string())
    }

    fn verify(&self) -> bool {
        self.inner.verify().is_ok()
    }

    fn to_path(&self) -> MerklePath {
        MerklePath {
            inner: merkle::MerklePath::from_mpt_proof(&self.inner),
        }
    }
}

#[pyclass(module = "zkpath")]
struct Mpt {
    inner: mpt::Mpt,
}

#[pymethods]
impl Mpt {
    #[new]
    fn new(pairs: Vec<(Vec<u8>, Vec<u8>)>) -> PyResult<Self> {
        Ok(Mpt {
            inner: mpt::Mpt::build(&pairs).map_err(value_err)?,
        })
    }

    #[getter]
    fn root<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        bytes(py, self.inner.root().as_ref())
    }

    fn get<'py>(&self, py: Python<'py>, key: &[u8]) -> Option<Bound<'py, PyBytes>> {
        self.inner.get(key).map(|v| bytes(py, v))
    }

    fn proof(&self, key: &[u8]) -> PyResult<MptProof> {
        Ok(MptProof {
            inner: self.inner.get_proof(key).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(module = "zkpath")]
#[derive(Clone)]
struct RecursiveProof {
    inner: aggregation::RecursiveProof,
}

#[pymethods]
impl RecursiveProof {
    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn backend(&self) -> &'static str {
        self.inner.backend.name()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(RecursiveProof {
            inner: serde_json::from_str(s).map_err(value_err)?,
        })
    }
}

/// Proving and verifying keys for one backend, derived from `seed`.
#[pyclass(module = "zkpath")]
struct Aggregator {
    pk: aggregation::ProvingKeys,
    vk: aggregation::VerifyingKeys,
}

#[pymethods]
impl Aggregator {
    #[new]
    #[pyo3(signature = (backend = "reexec", seed = 0))]
    fn new(backend: &str, seed: u64) -> PyResult<Self> {
        let backend: BackendId = backend.parse().map_err(value_err)?;
        let (pk, vk) = aggregation::setup_aggregation(backend, seed).map_err(value_err)?;
        Ok(Aggregator { pk, vk })
    }

    #[pyo3(signature = (leaf, path, mode = "simplified"))]
    fn prove(&self, py: Python<'_>, leaf: Vec<u8>, path: &MerklePath, mode: &str) -> PyResult<RecursiveProof> {
        let mode: Mode = mode.parse().map_err(value_err)?;
        let path = path.inner.clone();
        let pk = &self.pk;
        let rp = py
            .allow_threads(|| aggregation::prove_inclusion(pk, &leaf, &path, mode))
            .map_err(value_err)?;
        Ok(RecursiveProof { inner: rp })
    }

    fn verify(&self, leaf_hash: &[u8], root: &[u8], proof: &RecursiveProof) -> PyResult<bool> {
        let (l, r) = (digest(leaf_hash)?, digest(root)?);
        Ok(aggregation::verify_inclusion(&self.vk, &l, &r, &proof.inner).is_ok())
    }
}

fn method(s: &str) -> PyResult<Method> {
    s.parse().map_err(value_err)
}

/// Returns `(probability, log10_probability)`.
#[pyfunction]
#[pyo3(signature = (m, k, adversarial = false, method = "exact"))]
fn p_root_collision(m: u32, k: u64, adversarial: bool, method: &str) -> PyResult<(f64, f64)> {
    let p = security::p_root_collision(m, k, adversarial, self::method(method)?);
    Ok((p.value, p.log10_value))
}

#[pyfunction]
fn p_collision(m: u32, s: f64) -> (f64, f64) {
    let p = security::p_collision(m, s);
    (p.value, p.log10_value)
}

#[pyfunction]
fn birthday_bound(m: u32, p: f64) -> PyResult<f64> {
    security::birthday_bound(m, p).map_err(value_err)
}

fn gas_model(gas_price: Option<f64>, eth_usd: Option<f64>) -> PyResult<GasModel> {
    let mut gm = GasModel::default();
    if let Some(g) = gas_price {
        gm.gas_price_eth = g;
    }
    if let Some(u) = eth_usd {
        gm.eth_usd = u;
    }
    gm.validate().map_err(PyValueError::new_err)?;
    Ok(gm)
}

/// Returns `(gas, eth, usd)`.
#[pyfunction]
#[pyo3(signature = (n_bytes, model = "per-kb", gas_price = None, eth_usd = None))]
fn storage_cost(n_bytes: u64, model: &str, gas_price: Option<f64>, eth_usd: Option<f64>) -> PyResult<(f64, f64, f64)> {
    let model: CostModel = model.parse().map_err(value_err)?;
    let q = cost::storage_cost(n_bytes, model, &gas_model(gas_price, eth_usd)?);
    Ok((q.gas_used, q.cost_eth, q.cost_usd))
}

/// Returns `(gas, eth, usd)`.
#[pyfunction]
#[pyo3(signature = (n_bytes, gas_price = None, eth_usd = None))]
fn metadata_cost(n_bytes: u64, gas_price: Option<f64>, eth_usd: Option<f64>) -> PyResult<(f64, f64, f64)> {
    let q = cost::metadata_cost(n_bytes, &gas_model(gas_price, eth_usd)?);
    Ok((q.gas_used, q.cost_eth, q.cost_usd))
}

/// Synthetic state accounts; returns `(root, proofs)`.
#[pyfunction]
#[pyo3(signature = (count, seed = 0))]
fn gen_synthetic_state<'py>(py: Python<'py>, count: usize, seed: u64) -> PyResult<(Bound<'py, PyBytes>, Vec<MptProof>)> {
    let set = ingest::gen_synthetic_state(count, seed).map_err(value_err)?;
    let proofs = set.proofs().map(|inner| MptProof { inner }).collect();
    Ok((bytes(py, set.root.as_ref()), proofs))
}

#[pymodule]
fn zkpath(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(keccak256, m)?)?;
    m.add_function(wrap_pyfunction!(rlp_encode, m)?)?;
    m.add_function(wrap_pyfunction!(rlp_decode, m)?)?;
    m.add_function(wrap_pyfunction!(p_root_collision, m)?)?;
    m.add_function(wrap_pyfunction!(p_collision, m)?)?;
    m.add_function(wrap_pyfunction!(birthday_bound, m)?)?;
    m.add_function(wrap_pyfunction!(storage_cost, m)?)?;
    m.add_function(wrap_pyfunction!(metadata_cost, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic_state, m)?)?;
    m.add_class::<MerkleTree>()?;
    m.add_class::<MerklePath>()?;
    m.add_class::<Mpt>()?;
    m.add_class::<MptProof>()?;
    m.add_class::<Aggregator>()?;
    m.add_class::<RecursiveProof>()?;
    Ok(())
}
