//! Matrix Market files and the hierarchy manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{make_general_plant, make_normalized_lqg, DescriptorPlant, ModelHierarchy};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

pub fn parse_matrix_market(text: &str, path: &Path) -> Result<Mat<f64>> {
    let err = |m: String| Error::parse(path, m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let h: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(err(format!("bad header {header:?}")));
    }
    let coordinate = match h[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => return Err(err(format!("unsupported format {f}"))),
    };
    if h[3] != "real" && h[3] != "integer" {
        return Err(err(format!("unsupported field {}", h[3])));
    }
    let sym = match h[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        s => return Err(err(format!("unsupported symmetry {s}"))),
    };
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size = body.next().ok_or_else(|| err("missing size line".into()))?;
    let nums: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(format!("bad size line {size:?}"))))
        .collect::<Result<_>>()?;
    let num = |t: &str| t.parse::<f64>().map_err(|_| err(format!("bad number {t:?}")));
    let mirror = |m: &mut Mat<f64>, i: usize, j: usize, v: f64| {
        m[(i, j)] = v;
        if i != j {
            match sym {
                Symmetry::General => {}
                Symmetry::Symmetric => m[(j, i)] = v,
                Symmetry::Skew => m[(j, i)] = -v,
            }
        }
    };
    let m = if coordinate {
        let [r, c, nnz] = nums[..] else {
            return Err(err(format!("coordinate size line needs 3 integers, got {size:?}")));
        };
        let mut m = Mat::zeros(r, c);
        let mut seen = 0;
        for line in body {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(err(format!("bad entry {line:?}")));
            }
            let (i, j): (usize, usize) = (
                t[0].parse().map_err(|_| err(format!("bad row index {:?}", t[0])))?,
                t[1].parse().map_err(|_| err(format!("bad column index {:?}", t[1])))?,
            );
            if i == 0 || j == 0 || i > r || j > c {
                return Err(err(format!("entry ({i}, {j}) outside {r}x{c}")));
            }
            mirror(&mut m, i - 1, j - 1, num(t[2])?);
            seen += 1;
        }
        if seen != nnz {
            return Err(err(format!("expected {nnz} entries, found {seen}")));
        }
        m
    } else {
        let [r, c] = nums[..] else {
            return Err(err(format!("array size line needs 2 integers, got {size:?}")));
        };
        let vals = body.flat_map(str::split_whitespace).map(num).collect::<Result<Vec<f64>>>()?;
        let mut m = Mat::zeros(r, c);
        let mut it = vals.iter();
        let mut next = || it.next().copied().ok_or_else(|| err("too few array entries".into()));
        // column-major; symmetric variants store the lower triangle only
        for j in 0..c {
            let start = match sym {
                Symmetry::General => 0,
                Symmetry::Symmetric => j,
                Symmetry::Skew => j + 1,
            };
            for i in start..r {
                let v = next()?;
                mirror(&mut m, i, j, v);
            }
        }
        if it.next().is_some() {
            return Err(err("too many array entries".into()));
        }
        m
    };
    Ok(m)
}

pub fn read_matrix_market(path: &Path) -> Result<Mat<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text, path)
}

/// Coordinate format when at most half the entries are nonzero, array
/// format otherwise. Values use the shortest round-trip representation.
pub fn format_matrix_market(m: MatRef<'_, f64>) -> String {
    let (r, c) = (m.nrows(), m.ncols());
    // -0.0 counts as stored so the round trip stays bit-exact
    let stored = |i: usize, j: usize| m[(i, j)].to_bits() != 0;
    let nnz = (0..c).flat_map(|j| (0..r).map(move |i| (i, j))).filter(|&(i, j)| stored(i, j)).count();
    let mut s = String::new();
    if 2 * nnz <= r * c {
        let _ = writeln!(s, "%%MatrixMarket matrix coordinate real general\n{r} {c} {nnz}");
        for j in 0..c {
            for i in 0..r {
                if stored(i, j) {
                    let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, m[(i, j)]);
                }
            }
        }
    } else {
        let _ = writeln!(s, "%%MatrixMarket matrix array real general\n{r} {c}");
        for j in 0..c {
            for i in 0..r {
                let _ = writeln!(s, "{:e}", m[(i, j)]);
            }
        }
    }
    s
}

pub fn write_matrix_market(path: &Path, m: MatRef<'_, f64>) -> Result<()> {
    fs::write(path, format_matrix_market(m)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestFormulation {
    /// `E, A, B, C` wrapped into the normalized LQG plant.
    Lqg,
    /// `E, A, B1, B2, C2` with identity feed-through and `C1 = C2`.
    General,
    /// All ten plant matrices; missing D blocks are zero.
    Explicit,
}

/// Paths of one level, relative to the manifest directory. A missing `E` is
/// the identity.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelFiles {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "E", skip_serializing_if = "Option::is_none")]
    pub e: Option<PathBuf>,
    #[serde(rename = "A")]
    pub a: PathBuf,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<PathBuf>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<PathBuf>,
    #[serde(rename = "B1", skip_serializing_if = "Option::is_none")]
    pub b1: Option<PathBuf>,
    #[serde(rename = "B2", skip_serializing_if = "Option::is_none")]
    pub b2: Option<PathBuf>,
    #[serde(rename = "C1", skip_serializing_if = "Option::is_none")]
    pub c1: Option<PathBuf>,
    #[serde(rename = "C2", skip_serializing_if = "Option::is_none")]
    pub c2: Option<PathBuf>,
    #[serde(rename = "D11", skip_serializing_if = "Option::is_none")]
    pub d11: Option<PathBuf>,
    #[serde(rename = "D12", skip_serializing_if = "Option::is_none")]
    pub d12: Option<PathBuf>,
    #[serde(rename = "D21", skip_serializing_if = "Option::is_none")]
    pub d21: Option<PathBuf>,
    #[serde(rename = "D22", skip_serializing_if = "Option::is_none")]
    pub d22: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub formulation: ManifestFormulation,
    #[serde(rename = "level")]
    pub levels: Vec<LevelFiles>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

fn with_level(e: Error, level: usize) -> Error {
    match e {
        Error::NonzeroD22 { .. } => Error::NonzeroD22 { level: Some(level) },
        other => other,
    }
}

fn load_level(dir: &Path, f: &LevelFiles, form: ManifestFormulation, level: usize, manifest: &Path) -> Result<DescriptorPlant> {
    let read = |p: &PathBuf| read_matrix_market(&dir.join(p));
    let need = |p: &Option<PathBuf>, name: &str| {
        p.as_ref()
            .ok_or_else(|| Error::parse(manifest, format!("level {level}: {name} is required for this formulation")))
            .and_then(read)
    };
    let a = read(&f.a)?;
    let n = a.nrows();
    if let Some(expect) = f.n {
        if expect != n {
            return Err(Error::parse(manifest, format!("level {level}: declared n = {expect} but A is {n}x{}", a.ncols())));
        }
    }
    let e = match &f.e {
        Some(p) => read(p)?,
        None => Mat::identity(n, n),
    };
    let plant = match form {
        ManifestFormulation::Lqg => make_normalized_lqg(e, a, need(&f.b, "B")?, need(&f.c, "C")?),
        ManifestFormulation::General => make_general_plant(e, a, need(&f.b1, "B1")?, need(&f.b2, "B2")?, need(&f.c2, "C2")?),
        ManifestFormulation::Explicit => {
            let (b1, b2, c1, c2) = (need(&f.b1, "B1")?, need(&f.b2, "B2")?, need(&f.c1, "C1")?, need(&f.c2, "C2")?);
            let opt = |p: &Option<PathBuf>, r: usize, c: usize| match p {
                Some(p) => read(p),
                None => Ok(Mat::zeros(r, c)),
            };
            let d11 = opt(&f.d11, c1.nrows(), b1.ncols())?;
            let d12 = opt(&f.d12, c1.nrows(), b2.ncols())?;
            let d21 = opt(&f.d21, c2.nrows(), b1.ncols())?;
            let d22 = opt(&f.d22, c2.nrows(), b2.ncols())?;
            DescriptorPlant::new(e, a, b1, b2, c1, c2, d11, d12, d21, d22)
        }
    };
    plant.map_err(|e| with_level(e, level))
}

/// Loads and validates every level of a manifest.
pub fn load_hierarchy(manifest: &Path) -> Result<ModelHierarchy> {
    let m = Manifest::read(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let plants = m
        .levels
        .iter()
        .enumerate()
        .map(|(i, f)| load_level(dir, f, m.formulation, i + 1, manifest))
        .collect::<Result<Vec<_>>>()?;
    ModelHierarchy::new(plants)
}

/// Writes every plant matrix under `dir/level<k>/` and an explicit manifest
/// at `dir/manifest.toml`, which is returned.
pub fn save_hierarchy(hier: &ModelHierarchy, dir: &Path) -> Result<PathBuf> {
    let mut levels = Vec::new();
    for (i, p) in hier.plants().iter().enumerate() {
        let sub = PathBuf::from(format!("level{}", i + 1));
        fs::create_dir_all(dir.join(&sub)).map_err(|e| Error::io(dir.join(&sub), e))?;
        let mut f = LevelFiles {
            n: Some(p.dims().n),
            ..Default::default()
        };
        for (name, m) in p.matrices() {
            let rel = sub.join(format!("{name}.mtx"));
            write_matrix_market(&dir.join(&rel), m)?;
            let slot = match name {
                "E" => &mut f.e,
                "A" => {
                    f.a = rel;
                    continue;
                }
                "B1" => &mut f.b1,
                "B2" => &mut f.b2,
                "C1" => &mut f.c1,
                "C2" => &mut f.c2,
                "D11" => &mut f.d11,
                "D12" => &mut f.d12,
                "D21" => &mut f.d21,
                "D22" => &mut f.d22,
                other => unreachable!("unexpected plant block {other}"),
            };
            *slot = Some(rel);
        }
        levels.push(f);
    }
    let manifest = Manifest {
        formulation: ManifestFormulation::Explicit,
        levels,
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| Error::parse(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
