//! Content-addressed blob store plus an append-only ownership ledger.
//!
//! Blobs are stored under the hex SHA-256 of their bytes. An image is a list
//! of layers; each layer is stored on its own and the image hash addresses a
//! small manifest listing the layer hashes, so layers can be fetched
//! individually. The ledger binds `(owner, image name)` to image metadata
//! and records the hashes of archived metrics per device.
//!
//! On disk a registry directory holds:
//!
//! ```text
//! HEADER        {"format":"orchestrion-store","version":1,"hash":"sha256"}
//! store/<hash>  raw blob bytes
//! ledger.jsonl  one LedgerEntry per line, in append order
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::RegistryError;
use crate::model::{DeviceId, ImageName, LimitSet, OwnerId};
use crate::monitor::MetricsSeries;

pub const HASH_ALGORITHM: &str = "sha256";
const FORMAT: &str = "orchestrion-store";

/// Hex digest of a blob.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentHash(String);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> ContentHash {
        ContentHash(hex::encode(Sha256::digest(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts a 64-character lowercase hex string.
    pub fn parse(s: &str) -> Option<ContentHash> {
        let ok = s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        ok.then(|| ContentHash(s.to_string()))
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An image as an ordered list of layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBlob {
    pub layers: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Manifest {
    layers: Vec<ContentHash>,
}

/// Vendor-declared limits; any of them may be omitted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorLimits {
    #[serde(default)]
    pub request_cpu: Option<u64>,
    #[serde(default)]
    pub request_mem: Option<u64>,
    #[serde(default)]
    pub base_cpu: Option<u64>,
    #[serde(default)]
    pub base_mem: Option<u64>,
}

impl VendorLimits {
    pub fn full(request: LimitSet, base: LimitSet) -> Self {
        VendorLimits {
            request_cpu: Some(request.cpu.0),
            request_mem: Some(request.mem.0),
            base_cpu: Some(base.cpu.0),
            base_mem: Some(base.mem.0),
        }
    }

    fn validate(&self) -> Result<(), RegistryError> {
        let pairs = [
            ("cpu", self.base_cpu, self.request_cpu),
            ("memory", self.base_mem, self.request_mem),
        ];
        for (what, base, request) in pairs {
            if let (Some(b), Some(r)) = (base, request) {
                if b > r {
                    return Err(RegistryError::InvalidImage(format!(
                        "base {what} limit {b} exceeds request limit {r}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ledger metadata for one `(owner, image name)` key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_hash: ContentHash,
    pub image_name: ImageName,
    pub base_limit_memory: Option<u64>,
    pub request_limit_memory: Option<u64>,
    pub base_limit_cpu: Option<u64>,
    pub request_limit_cpu: Option<u64>,
    pub owner: OwnerId,
}

impl ImageRecord {
    /// Request and base limits, filling omitted values from the defaults.
    pub fn limits(&self, default_request: LimitSet, default_base: LimitSet) -> (LimitSet, LimitSet) {
        let request = LimitSet::new(
            self.request_limit_cpu.unwrap_or(default_request.cpu.0),
            self.request_limit_memory.unwrap_or(default_request.mem.0),
        );
        let base = LimitSet::new(
            self.base_limit_cpu.unwrap_or(default_base.cpu.0.min(request.cpu.0)),
            self.base_limit_memory.unwrap_or(default_base.mem.0.min(request.mem.0)),
        );
        (request, base)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum LedgerEntry {
    Set {
        seq: u64,
        #[serde(flatten)]
        record: ImageRecord,
    },
    Archive {
        seq: u64,
        device: DeviceId,
        hash: ContentHash,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    hash: String,
}

#[derive(Debug)]
enum Backend {
    Memory(BTreeMap<ContentHash, Vec<u8>>),
    Disk(PathBuf),
}

#[derive(Debug)]
struct State {
    backend: Backend,
    ledger: Vec<LedgerEntry>,
    images: BTreeMap<(OwnerId, ImageName), ImageRecord>,
    archives: BTreeMap<DeviceId, Vec<ContentHash>>,
}

impl State {
    fn apply(&mut self, entry: &LedgerEntry) {
        match entry {
            LedgerEntry::Set { record, .. } => {
                self.images.insert(
                    (record.owner.clone(), record.image_name.clone()),
                    record.clone(),
                );
            }
            LedgerEntry::Archive { device, hash, .. } => {
                self.archives.entry(*device).or_default().push(hash.clone());
            }
        }
    }

    fn append(&mut self, entry: LedgerEntry) -> Result<(), RegistryError> {
        if let Backend::Disk(root) = &self.backend {
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(root.join("ledger.jsonl"))?;
            f.write_all(&line)?;
        }
        self.apply(&entry);
        self.ledger.push(entry);
        Ok(())
    }

    fn next_seq(&self) -> u64 {
        self.ledger.len() as u64 + 1
    }

    fn put(&mut self, bytes: &[u8]) -> Result<ContentHash, RegistryError> {
        let hash = ContentHash::of(bytes);
        match &mut self.backend {
            Backend::Memory(map) => {
                map.entry(hash.clone()).or_insert_with(|| bytes.to_vec());
            }
            Backend::Disk(root) => {
                let path = root.join("store").join(hash.as_str());
                if !path.exists() {
                    let tmp = root.join("store").join(format!(".{}.tmp", hash));
                    fs::write(&tmp, bytes)?;
                    fs::rename(tmp, path)?;
                }
            }
        }
        Ok(hash)
    }

    fn get(&self, hash: &ContentHash) -> Result<Vec<u8>, RegistryError> {
        let bytes = match &self.backend {
            Backend::Memory(map) => map
                .get(hash)
                .cloned()
                .ok_or_else(|| RegistryError::NotFound(format!("blob {hash}")))?,
            Backend::Disk(root) => match fs::read(root.join("store").join(hash.as_str())) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(RegistryError::NotFound(format!("blob {hash}")))
                }
                Err(e) => return Err(e.into()),
            },
        };
        if ContentHash::of(&bytes) != *hash {
            return Err(RegistryError::Tampered(hash.to_string()));
        }
        Ok(bytes)
    }
}

/// Thread-safe registry handle. Reads and writes are serialized internally.
#[derive(Debug)]
pub struct Registry {
    state: Mutex<State>,
}

impl Registry {
    pub fn in_memory() -> Self {
        Registry {
            state: Mutex::new(State {
                backend: Backend::Memory(BTreeMap::new()),
                ledger: Vec::new(),
                images: BTreeMap::new(),
                archives: BTreeMap::new(),
            }),
        }
    }

    /// Opens or initializes a registry directory, replaying its ledger.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let root = dir.as_ref().to_path_buf();
        fs::create_dir_all(root.join("store"))?;
        let header_path = root.join("HEADER");
        if header_path.exists() {
            let header: Header = serde_json::from_slice(&fs::read(&header_path)?)?;
            if header.hash != HASH_ALGORITHM || header.format != FORMAT {
                return Err(RegistryError::UnsupportedAlgorithm(header.hash));
            }
        } else {
            let header = Header {
                format: FORMAT.to_string(),
                version: 1,
                hash: HASH_ALGORITHM.to_string(),
            };
            fs::write(&header_path, serde_json::to_vec(&header)?)?;
        }
        let mut state = State {
            backend: Backend::Disk(root.clone()),
            ledger: Vec::new(),
            images: BTreeMap::new(),
            archives: BTreeMap::new(),
        };
        let ledger_path = root.join("ledger.jsonl");
        if ledger_path.exists() {
            for line in fs::read_to_string(ledger_path)?.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LedgerEntry = serde_json::from_str(line)?;
                state.apply(&entry);
                state.ledger.push(entry);
            }
        }
        Ok(Registry {
            state: Mutex::new(state),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().expect("registry poisoned")
    }

    /// Stores raw bytes and returns their address.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<ContentHash, RegistryError> {
        self.lock().put(bytes)
    }

    /// Fetches raw bytes, verifying them against their address.
    pub fn get_blob(&self, hash: &ContentHash) -> Result<Vec<u8>, RegistryError> {
        self.lock().get(hash)
    }

    /// Stores an image and creates or updates its ledger entry. Only the
    /// owner may write under its own key.
    pub fn publish_image(
        &self,
        caller: &OwnerId,
        owner: &OwnerId,
        name: &ImageName,
        blob: &ImageBlob,
        limits: VendorLimits,
    ) -> Result<ContentHash, RegistryError> {
        if caller != owner {
            return Err(RegistryError::OwnershipViolation(caller.to_string()));
        }
        if blob.layers.is_empty() {
            return Err(RegistryError::InvalidImage("image has no layers".into()));
        }
        limits.validate()?;
        let mut st = self.lock();
        if let Some(existing) = st.images.get(&(owner.clone(), name.clone())) {
            if existing.owner != *caller {
                return Err(RegistryError::OwnershipViolation(caller.to_string()));
            }
        }
        let layers = blob
            .layers
            .iter()
            .map(|l| st.put(l))
            .collect::<Result<Vec<_>, _>>()?;
        let manifest = serde_json::to_vec(&Manifest { layers })?;
        let image_hash = st.put(&manifest)?;
        let record = ImageRecord {
            image_hash: image_hash.clone(),
            image_name: name.clone(),
            base_limit_memory: limits.base_mem,
            request_limit_memory: limits.request_mem,
            base_limit_cpu: limits.base_cpu,
            request_limit_cpu: limits.request_cpu,
            owner: owner.clone(),
        };
        let seq = st.next_seq();
        st.append(LedgerEntry::Set { seq, record })?;
        Ok(image_hash)
    }

    pub fn get_image(&self, owner: &OwnerId, name: &ImageName) -> Result<ImageRecord, RegistryError> {
        self.lock()
            .images
            .get(&(owner.clone(), name.clone()))
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(format!("image {owner}/{name}")))
    }

    /// Fetches a whole image, verifying the manifest and every layer.
    pub fn fetch_blob(&self, hash: &ContentHash) -> Result<ImageBlob, RegistryError> {
        let st = self.lock();
        let manifest: Manifest = serde_json::from_slice(&st.get(hash)?)
            .map_err(|_| RegistryError::InvalidImage(format!("{hash} is not an image manifest")))?;
        let layers = manifest
            .layers
            .iter()
            .map(|h| st.get(h))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ImageBlob { layers })
    }

    /// Layer hashes of an image, for layer-wise fetching.
    pub fn layer_hashes(&self, hash: &ContentHash) -> Result<Vec<ContentHash>, RegistryError> {
        let bytes = self.get_blob(hash)?;
        let manifest: Manifest = serde_json::from_slice(&bytes)
            .map_err(|_| RegistryError::InvalidImage(format!("{hash} is not an image manifest")))?;
        Ok(manifest.layers)
    }

    /// Stores a serialized metrics series and records its hash for `device`.
    pub fn archive_metrics(
        &self,
        device: DeviceId,
        series: &MetricsSeries,
    ) -> Result<ContentHash, RegistryError> {
        if series.is_empty() {
            return Err(RegistryError::InvalidImage("empty metrics series".into()));
        }
        let bytes = serde_json::to_vec(series)?;
        let mut st = self.lock();
        let hash = st.put(&bytes)?;
        let seq = st.next_seq();
        st.append(LedgerEntry::Archive {
            seq,
            device,
            hash: hash.clone(),
        })?;
        Ok(hash)
    }

    pub fn fetch_archive(&self, hash: &ContentHash) -> Result<MetricsSeries, RegistryError> {
        Ok(serde_json::from_slice(&self.get_blob(hash)?)?)
    }

    pub fn archives(&self, device: DeviceId) -> Vec<ContentHash> {
        self.lock().archives.get(&device).cloned().unwrap_or_default()
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.lock().ledger.clone()
    }

    #[cfg(test)]
    fn overwrite_raw(&self, hash: &ContentHash, bytes: Vec<u8>) {
        if let Backend::Memory(map) = &mut self.lock().backend {
            map.insert(hash.clone(), bytes);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn owner(s: &str) -> OwnerId {
        OwnerId::new(s).unwrap()
    }

    fn name(s: &str) -> ImageName {
        ImageName::new(s).unwrap()
    }

    fn blob(tag: &str) -> ImageBlob {
        ImageBlob {
            layers: vec![format!("config:{tag}").into_bytes(), vec![7u8; 64]],
        }
    }

    fn exp1_limits() -> VendorLimits {
        VendorLimits::full(LimitSet::new(300, 150), LimitSet::new(100, 100))
    }

    #[test]
    fn publish_then_get_round_trips() {
        let reg = Registry::in_memory();
        let v = owner("vendor");
        let h = reg
            .publish_image(&v, &v, &name("memory-1"), &blob("a"), exp1_limits())
            .unwrap();
        let rec = reg.get_image(&v, &name("memory-1")).unwrap();
        assert_eq!(rec.image_hash, h);
        assert_eq!(rec.request_limit_memory, Some(150));
        assert_eq!(rec.base_limit_memory, Some(100));
        assert_eq!(reg.fetch_blob(&h).unwrap(), blob("a"));
    }

    #[test]
    fn other_callers_cannot_write_under_an_owner() {
        let reg = Registry::in_memory();
        let v = owner("vendor");
        reg.publish_image(&v, &v, &name("app"), &blob("a"), exp1_limits())
            .unwrap();
        let err = reg
            .publish_image(&owner("mallory"), &v, &name("app"), &blob("evil"), exp1_limits())
            .unwrap_err();
        assert!(matches!(err, RegistryError::OwnershipViolation(_)));
        assert_eq!(reg.get_image(&v, &name("app")).unwrap().owner, v);
    }

    #[test]
    fn identical_bytes_share_a_hash_and_updates_replace() {
        let reg = Registry::in_memory();
        let v = owner("vendor");
        let h1 = reg
            .publish_image(&v, &v, &name("app"), &blob("a"), exp1_limits())
            .unwrap();
        let h2 = reg
            .publish_image(&v, &v, &name("app"), &blob("a"), exp1_limits())
            .unwrap();
        assert_eq!(h1, h2);
        let h3 = reg
            .publish_image(&v, &v, &name("app"), &blob("b"), exp1_limits())
            .unwrap();
        assert_ne!(h1, h3);
        assert_eq!(reg.get_image(&v, &name("app")).unwrap().image_hash, h3);
    }

    #[test]
    fn validation_errors() {
        let reg = Registry::in_memory();
        let v = owner("vendor");
        let bad = VendorLimits::full(LimitSet::new(100, 100), LimitSet::new(100, 150));
        assert!(matches!(
            reg.publish_image(&v, &v, &name("x"), &blob("a"), bad),
            Err(RegistryError::InvalidImage(_))
        ));
        let empty = ImageBlob { layers: vec![] };
        assert!(reg
            .publish_image(&v, &v, &name("x"), &empty, exp1_limits())
            .is_err());
        assert!(matches!(
            reg.get_image(&v, &name("missing")),
            Err(RegistryError::NotFound(_))
        ));
        let random = ContentHash::of(b"never stored");
        assert!(matches!(
            reg.fetch_blob(&random),
            Err(RegistryError::NotFound(_))
        ));
    }

    #[test]
    fn corrupted_layer_is_detected() {
        let reg = Registry::in_memory();
        let v = owner("vendor");
        let h = reg
            .publish_image(&v, &v, &name("app"), &blob("a"), exp1_limits())
            .unwrap();
        let layer = reg.layer_hashes(&h).unwrap()[1].clone();
        let mut bytes = reg.get_blob(&layer).unwrap();
        bytes[3] ^= 0x01;
        reg.overwrite_raw(&layer, bytes);
        assert!(matches!(reg.fetch_blob(&h), Err(RegistryError::Tampered(_))));
    }

    #[test]
    fn missing_limits_fall_back_to_defaults() {
        let rec = ImageRecord {
            image_hash: ContentHash::of(b"x"),
            image_name: name("x"),
            base_limit_memory: None,
            request_limit_memory: Some(15),
            base_limit_cpu: None,
            request_limit_cpu: None,
            owner: owner("v"),
        };
        let (req, base) = rec.limits(LimitSet::new(200, 128), LimitSet::new(100, 64));
        assert_eq!(req, LimitSet::new(200, 15));
        assert_eq!(base, LimitSet::new(100, 15));
    }

    #[test]
    fn disk_layout_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let v = owner("vendor");
        let h = {
            let reg = Registry::open(dir.path()).unwrap();
            reg.publish_image(&v, &v, &name("app"), &blob("a"), exp1_limits())
                .unwrap()
        };
        assert!(dir.path().join("store").join(h.as_str()).exists());
        let header = fs::read_to_string(dir.path().join("HEADER")).unwrap();
        assert!(header.contains("\"sha256\""));
        let ledger = fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap();
        assert_eq!(ledger.lines().count(), 1);
        assert!(ledger.starts_with("{\"op\":\"set\",\"seq\":1"));

        let reg = Registry::open(dir.path()).unwrap();
        assert_eq!(reg.get_image(&v, &name("app")).unwrap().image_hash, h);
        assert_eq!(reg.fetch_blob(&h).unwrap(), blob("a"));
    }

    #[test]
    fn content_hash_parsing() {
        let h = ContentHash::of(b"abc");
        assert_eq!(
            h.as_str(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(ContentHash::parse(h.as_str()), Some(h));
        assert_eq!(ContentHash::parse("xyz"), None);
    }

    proptest::proptest! {
        #[test]
        fn blobs_round_trip_by_content(bytes in proptest::collection::vec(proptest::num::u8::ANY, 0..300)) {
            let reg = Registry::in_memory();
            let h = reg.put_blob(&bytes).unwrap();
            proptest::prop_assert_eq!(&h, &ContentHash::of(&bytes));
            proptest::prop_assert_eq!(reg.put_blob(&bytes).unwrap(), h.clone());
            proptest::prop_assert_eq!(reg.get_blob(&h).unwrap(), bytes);
        }

        #[test]
        fn base_above_request_is_refused(base in 1u64..500, request in 1u64..500) {
            let v = owner("v");
            let limits = VendorLimits::full(LimitSet::new(request, request), LimitSet::new(base, base));
            let res = Registry::in_memory().publish_image(&v, &v, &name("app"), &blob("a"), limits);
            proptest::prop_assert_eq!(res.is_ok(), base <= request);
        }
    }
}
