//! Content-addressed bitstream storage.
//!
//! Layout: `blobs/<first two hex chars of md5>/<md5>`. The storage key of
//! a blob is its MD5 digest in lowercase hex, so identical content is
//! stored exactly once.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn md5_hex(bytes: &[u8]) -> String {
    format!("{:x}", md5::compute(bytes))
}

#[derive(Debug, Clone)]
pub struct BlobDir {
    root: PathBuf,
}

impl BlobDir {
    pub fn open(root: &Path) -> std::io::Result<BlobDir> {
        fs::create_dir_all(root)?;
        Ok(BlobDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = if key.len() >= 2 { &key[..2] } else { "00" };
        self.root.join(shard).join(key)
    }

    /// Store `bytes` under their MD5 key. Returns the key and whether a
    /// new file was written (false means deduplicated).
    pub fn write(&self, bytes: &[u8]) -> std::io::Result<(String, bool)> {
        let key = md5_hex(bytes);
        let path = self.path_for(&key);
        if path.exists() {
            return Ok((key, false));
        }
        fs::create_dir_all(path.parent().unwrap())?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
        fs::rename(&tmp, &path)?;
        Ok((key, true))
    }

    pub fn exists(&self, key: &str) -> bool {
        self.path_for(key).exists()
    }

    pub fn read(&self, key: &str) -> std::io::Result<Option<Vec<u8>>> {
        match fs::read(self.path_for(key)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn remove(&self, key: &str) -> std::io::Result<()> {
        match fs::remove_file(self.path_for(key)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Number of stored blobs, counted from disk.
    pub fn count(&self) -> usize {
        let mut n = 0;
        if let Ok(shards) = fs::read_dir(&self.root) {
            for shard in shards.flatten() {
                if let Ok(files) = fs::read_dir(shard.path()) {
                    n += files
                        .flatten()
                        .filter(|f| f.path().extension().is_none())
                        .count();
                }
            }
        }
        n
    }
}
