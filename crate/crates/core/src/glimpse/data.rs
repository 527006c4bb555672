use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::tensor::Tensor;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SHPT";
const VERSION: u32 = 1;

/// Synthetic classification task: one binary pattern per class pasted
/// into a noisy image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchTaskConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub classes: usize,
    /// Background pixels are uniform in `[0, noise]`.
    pub noise: f64,
}

impl Default for PatchTaskConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 8,
            classes: 4,
            noise: 0.3,
        }
    }
}

/// Cells of a `grid x grid` layout, scaled up to a `patch x patch` mask.
fn block_pattern(cells: &[usize], grid: usize, patch: usize) -> Vec<u8> {
    (0..patch * patch)
        .map(|i| {
            let (r, c) = (i / patch * grid / patch, i % patch * grid / patch);
            u8::from(cells.contains(&(r * grid + c)))
        })
        .collect()
}

/// One binary mask per class with half of its blocks set.
///
/// Up to six classes use the two-of-four quadrant layouts (top, left,
/// diagonal, anti-diagonal, right, bottom), which stay recognizable when
/// read at a coarse grid. More classes draw random half-filled layouts of
/// a 4x4 block grid from the pattern stream of `seed`, pairwise at least
/// four blocks apart when that is achievable.
pub fn make_patterns(seed: u64, classes: usize, patch: usize) -> Vec<Vec<u8>> {
    // quadrants numbered row-major: top, left, diagonal, anti-diagonal, right, bottom
    const QUADRANTS: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
    if classes <= QUADRANTS.len() {
        return QUADRANTS[..classes].iter().map(|q| block_pattern(q, 2, patch)).collect();
    }
    let mut r = rng::stream(seed, streams::PATTERNS);
    let grid = 4;
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(classes);
    let mut tries = 0;
    while out.len() < classes {
        let mut cells: Vec<usize> = (0..grid * grid).collect();
        cells.shuffle(&mut r);
        cells.truncate(grid * grid / 2);
        cells.sort_unstable();
        tries += 1;
        let far = out.iter().all(|q| q.iter().filter(|c| !cells.contains(c)).count() * 2 >= 4);
        if !out.contains(&cells) && (far || tries > 10_000) {
            out.push(cells);
        }
    }
    out.iter().map(|c| block_pattern(c, grid, patch)).collect()
}

/// Images flattened to `[count, h w]` plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub config: PatchTaskConfig,
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl PatchDataset {
    /// `count` instances drawn from stream `stream` of `seed`. The patterns
    /// depend on `seed` only, so train and test sets from different streams
    /// share them.
    pub fn generate(seed: u64, stream: u64, count: usize, config: PatchTaskConfig) -> Result<Self> {
        let PatchTaskConfig { image_size: s, patch_size: p, classes, noise } = config;
        if p == 0 || p > s || classes == 0 || !(0.0..1.0).contains(&noise) {
            return Err(Error::Config(format!("invalid patch task {config:?}")));
        }
        let patterns = make_patterns(seed, classes, p);
        let mut r = rng::stream(seed, stream);
        let mut images = Vec::with_capacity(count * s * s);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let label = r.gen_range(0..classes);
            let (top, left) = (r.gen_range(0..=s - p), r.gen_range(0..=s - p));
            let mut img: Vec<f64> = (0..s * s).map(|_| r.gen::<f64>() * noise).collect();
            for i in 0..p {
                for j in 0..p {
                    if patterns[label][i * p + j] == 1 {
                        img[(top + i) * s + left + j] = 1.0;
                    }
                }
            }
            images.extend(img);
            labels.push(label);
        }
        Ok(Self {
            config,
            images: Tensor::from_parts(vec![count, s * s], images),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows `range` as a new `[n, h w]` tensor with their labels.
    pub fn slice(&self, start: usize, len: usize) -> (Tensor, Vec<usize>) {
        let px = self.config.image_size * self.config.image_size;
        let end = (start + len).min(self.len());
        let data = self.images.data()[start * px..end * px].to_vec();
        (Tensor::from_parts(vec![end - start, px], data), self.labels[start..end].to_vec())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(self.len() as u64)?;
        for v in [c.image_size, c.patch_size, c.classes] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        w.write_f64::<LittleEndian>(c.noise)?;
        for &x in self.images.data() {
            w.write_f64::<LittleEndian>(x)?;
        }
        for &l in &self.labels {
            w.write_u8(l as u8)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a patch dataset file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let count = r.read_u64::<LittleEndian>()? as usize;
        let image_size = r.read_u32::<LittleEndian>()? as usize;
        let patch_size = r.read_u32::<LittleEndian>()? as usize;
        let classes = r.read_u32::<LittleEndian>()? as usize;
        let noise = r.read_f64::<LittleEndian>()?;
        let px = image_size * image_size;
        let mut images = vec![0.0; count * px];
        r.read_f64_into::<LittleEndian>(&mut images)?;
        let mut raw = vec![0u8; count];
        r.read_exact(&mut raw)?;
        let labels: Vec<usize> = raw.into_iter().map(usize::from).collect();
        if labels.iter().any(|&l| l >= classes) {
            return Err(Error::Format("label out of range".into()));
        }
        Ok(Self {
            config: PatchTaskConfig { image_size, patch_size, classes, noise },
            images: Tensor::from_parts(vec![count, px], images),
            labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
