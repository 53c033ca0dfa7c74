//! Field dumps, CSV tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField, SymTraceFreeTensor2Field, VectorField2};
use crate::scheme::StateSlice;

const MAGIC: &[u8; 8] = b"CVIFLD01";
const COMPONENTS: usize = 6;

/// `[magic | n | q | t | ncomp | v₁ v₂ p θ R₁₁ R₁₂]`, little endian.
pub fn encode_slice(q: usize, s: &StateSlice) -> Vec<u8> {
    let n = s.v.grid().n();
    let mut out = Vec::with_capacity(40 + COMPONENTS * n * n * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(q as u64).to_le_bytes());
    out.extend_from_slice(&s.t.to_le_bytes());
    out.extend_from_slice(&(COMPONENTS as u64).to_le_bytes());
    for f in [&s.v.u1, &s.v.u2, &s.p, &s.theta, &s.r.t11, &s.r.t12] {
        for x in f.values() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_slice(bytes: &[u8]) -> Result<(usize, StateSlice)> {
    let fmt = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 40 || &bytes[..8] != MAGIC {
        return Err(fmt("not a field dump"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let n = word(8) as usize;
    let q = word(16) as usize;
    let t = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let nc = word(32) as usize;
    if nc != COMPONENTS || bytes.len() != 40 + nc * n * n * 8 {
        return Err(fmt("truncated or malformed field dump"));
    }
    let grid = Grid::new(n)?;
    let len = n * n;
    let comp = |c: usize| -> ScalarField {
        let base = 40 + c * len * 8;
        let v = (0..len).map(|i| f64::from_le_bytes(bytes[base + 8 * i..base + 8 * i + 8].try_into().unwrap())).collect();
        ScalarField::new(grid, v)
    };
    Ok((
        q,
        StateSlice {
            t,
            v: VectorField2::new(comp(0), comp(1)),
            p: comp(2),
            theta: comp(3),
            r: SymTraceFreeTensor2Field::new(comp(4), comp(5)),
        },
    ))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One registered output file.
#[derive(Clone, Debug, PartialEq)]
pub struct FileEntry {
    pub path: String,
    pub kind: String,
    pub sha256: String,
}

/// Run manifest: metadata plus every output file with its checksum.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub meta: Vec<(String, String)>,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl Manifest {
    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn files_of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a FileEntry> + 'a {
        self.files.iter().filter(move |f| f.kind == kind)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# run manifest\n");
        for (k, v) in &self.meta {
            s.push_str(&format!("meta {k} = {v}\n"));
        }
        for f in &self.files {
            s.push_str(&format!("file {} {} {}\n", f.sha256, f.kind, f.path));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let mut m = Manifest::default();
        for line in text.lines() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(" = ").ok_or_else(|| Error::Format(format!("bad manifest line {line:?}")))?;
                m.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("file ") {
                let mut it = rest.splitn(3, ' ');
                match (it.next(), it.next(), it.next()) {
                    (Some(h), Some(k), Some(p)) => {
                        m.files.push(FileEntry { path: p.to_string(), kind: k.to_string(), sha256: h.to_string() })
                    }
                    _ => return Err(Error::Format(format!("bad manifest line {line:?}"))),
                }
            } else {
                return Err(Error::Format(format!("bad manifest line {line:?}")));
            }
        }
        Ok(m)
    }
}

/// A run directory: writes files and keeps the manifest in step.
pub struct RunDir {
    root: PathBuf,
    pub manifest: Manifest,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<RunDir> {
        fs::create_dir_all(root)?;
        Ok(RunDir { root: root.to_path_buf(), manifest: Manifest::default() })
    }

    pub fn open(root: &Path) -> Result<RunDir> {
        let text = fs::read_to_string(root.join(MANIFEST_NAME))
            .map_err(|e| Error::from(e).context(format!("reading manifest in {}", root.display())))?;
        Ok(RunDir { root: root.to_path_buf(), manifest: Manifest::parse(&text)? })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Write `bytes` at `rel` and register it, replacing any entry at that path.
    pub fn write(&mut self, rel: &str, kind: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&p, bytes)?;
        let entry = FileEntry { path: rel.to_string(), kind: kind.to_string(), sha256: sha256_hex(bytes) };
        match self.manifest.files.iter_mut().find(|f| f.path == rel) {
            Some(f) => *f = entry,
            None => self.manifest.files.push(entry),
        }
        Ok(())
    }

    pub fn read(&self, entry: &FileEntry) -> Result<Vec<u8>> {
        Ok(fs::read(self.path(&entry.path))?)
    }

    /// Read and check a registered file.
    pub fn read_checked(&self, entry: &FileEntry) -> Result<Vec<u8>> {
        let bytes = self.read(entry)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Checksum(entry.path.clone()));
        }
        Ok(bytes)
    }

    /// Every registered file whose checksum does not match.
    pub fn verify_checksums(&self) -> Vec<String> {
        self.manifest
            .files
            .iter()
            .filter(|f| self.read_checked(f).is_err())
            .map(|f| f.path.clone())
            .collect()
    }

    pub fn save_manifest(&self) -> Result<()> {
        fs::write(self.root.join(MANIFEST_NAME), self.manifest.to_text())?;
        Ok(())
    }
}

/// Grid values as `x,y,<names...>` rows.
pub fn fields_csv(names: &[&str], fields: &[&ScalarField]) -> String {
    let grid = fields[0].grid();
    let n = grid.n();
    let mut s = format!("x,y,{}\n", names.join(","));
    for i1 in 0..n {
        for i2 in 0..n {
            let (x, y) = (grid.coord(i1), grid.coord(i2));
            s.push_str(&format!("{x:.9},{y:.9}"));
            for f in fields {
                s.push_str(&format!(",{:.12e}", f.values()[i1 * n + i2]));
            }
            s.push('\n');
        }
    }
    s
}

pub fn key_value_csv(rows: &[(String, String)]) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let g = Grid::new(8).unwrap();
        let f = |c: f64| ScalarField::from_fn(g, move |x, y| c + x.sin() * y.cos());
        let s = StateSlice {
            t: 0.25,
            v: VectorField2::new(f(1.0), f(2.0)),
            p: f(3.0),
            theta: f(4.0),
            r: SymTraceFreeTensor2Field::new(f(5.0), f(6.0)),
        };
        let bytes = encode_slice(1, &s);
        let (q, back) = decode_slice(&bytes).unwrap();
        assert_eq!(q, 1);
        assert_eq!(back.t, 0.25);
        assert_eq!(back.r.t12.values(), s.r.t12.values());
        assert!(decode_slice(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn manifest_round_trip_and_checksums() {
        let dir = std::env::temp_dir().join(format!("convint-io-{}", std::process::id()));
        let mut rd = RunDir::create(&dir).unwrap();
        rd.manifest.set_meta("stages", "1");
        rd.write("a/b.csv", "table", b"x,y\n1,2\n").unwrap();
        rd.save_manifest().unwrap();
        let back = RunDir::open(&dir).unwrap();
        assert_eq!(back.manifest, rd.manifest);
        assert!(back.verify_checksums().is_empty());
        fs::write(dir.join("a/b.csv"), b"x,y\n1,3\n").unwrap();
        assert_eq!(back.verify_checksums(), vec!["a/b.csv".to_string()]);
        fs::remove_dir_all(&dir).unwrap();
    }
}
