//! Patch-domain analysis of grayscale images: sliding-window extraction,
//! per-group reconstruction, overlap-averaged reassembly and PSNR.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::{ActiveGroupSet, CoefficientMatrix, GroupedDictionary, SampleId, SampleMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: Array2<f64>,
    provenance: String,
}

impl GrayImage {
    pub fn new(pixels: Array2<f64>, provenance: impl Into<String>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::Empty("image"));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixels"));
        }
        Ok(Self {
            pixels,
            provenance: provenance.into(),
        })
    }

    pub fn pixels(&self) -> ArrayView2<'_, f64> {
        self.pixels.view()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    /// Columns `[c0, c1)`.
    pub fn columns(&self, c0: usize, c1: usize) -> Result<Self> {
        if c0 >= c1 || c1 > self.width() {
            return Err(Error::InvalidConfig(format!(
                "column range {c0}..{c1} invalid for width {}",
                self.width()
            )));
        }
        Self::new(
            self.pixels.slice(s![.., c0..c1]).to_owned(),
            format!("{}[:, {c0}..{c1}]", self.provenance),
        )
    }

    pub fn left_half(&self) -> Result<Self> {
        self.columns(0, self.width() / 2)
    }

    pub fn right_half(&self) -> Result<Self> {
        self.columns(self.width() / 2, self.width())
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.pixels
    }
}

/// Pixel-wise weighted sum of equally sized images.
pub fn mix_images(images: &[&GrayImage], weights: &[f64]) -> Result<GrayImage> {
    let first = images.first().ok_or(Error::Empty("images"))?;
    if weights.len() != images.len() {
        return Err(Error::mismatch(
            "mixing weights",
            images.len(),
            weights.len(),
        ));
    }
    let mut out = Array2::zeros(first.pixels.dim());
    for (img, &w) in images.iter().zip(weights) {
        check_same_dims(first, img)?;
        out.scaled_add(w, &img.pixels);
    }
    let names: Vec<&str> = images.iter().map(|i| i.provenance()).collect();
    GrayImage::new(out, format!("mix({})", names.join(" + ")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    pub patch: usize,
    pub stride: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch: 10,
            stride: 1,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.stride == 0 {
            return Err(Error::InvalidConfig(format!(
                "patch and stride must be positive, got {} and {}",
                self.patch, self.stride
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.patch * self.patch
    }

    /// Top-left corners in row-major order.
    pub fn positions(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        if height < self.patch || width < self.patch {
            return Vec::new();
        }
        let rows = (0..=height - self.patch).step_by(self.stride);
        rows.flat_map(|r| {
            (0..=width - self.patch)
                .step_by(self.stride)
                .map(move |c| (r, c))
        })
        .collect()
    }
}

/// Column-major vectorized patches; ids are the top-left corners.
pub fn extract_patches(img: &GrayImage, pc: &PatchConfig) -> Result<SampleMatrix> {
    pc.validate()?;
    let (h, w) = (img.height(), img.width());
    if h < pc.patch || w < pc.patch {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            patch: pc.patch,
        });
    }
    let positions = pc.positions(h, w);
    let p = pc.patch;
    let mut data = Array2::zeros((pc.dim(), positions.len()));
    for (mut col, &(r, c)) in data.axis_iter_mut(Axis(1)).zip(&positions) {
        let block = img.pixels.slice(s![r..r + p, c..c + p]);
        for (k, v) in block.t().iter().enumerate() {
            col[k] = *v;
        }
    }
    let ids = positions
        .into_iter()
        .map(|(row, col)| SampleId::Patch { row, col })
        .collect();
    SampleMatrix::new(data, ids)
}

/// Top-left corners recorded in patch sample ids.
pub fn patch_positions(samples: &SampleMatrix) -> Result<Vec<(usize, usize)>> {
    samples
        .ids()
        .iter()
        .map(|id| match *id {
            SampleId::Patch { row, col } => Ok((row, col)),
            _ => Err(Error::InvalidConfig(
                "sample ids are not patch positions".into(),
            )),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceEstimate {
    pub group: usize,
    pub label: String,
    /// `D_G A^G`, one column per patch.
    pub patches: Array2<f64>,
}

/// Per-group reconstructions `D_G A^G` for every active group.
pub fn separate_sources(
    a: &CoefficientMatrix,
    dict: &GroupedDictionary,
    active: &ActiveGroupSet,
) -> Result<Vec<SourceEstimate>> {
    let n = a.values().ncols();
    a.check_shape(dict, n)?;
    if active.len() != dict.n_groups() {
        return Err(Error::mismatch(
            "active group set",
            dict.n_groups(),
            active.len(),
        ));
    }
    Ok(active
        .active_indices()
        .into_iter()
        .map(|g| {
            let rows = dict.groups().range(g);
            SourceEstimate {
                group: g,
                label: dict.labels()[g].clone(),
                patches: dict.block(g).dot(&a.values().slice(s![rows, ..])),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reassembled {
    pub image: GrayImage,
    /// True where no patch covered the pixel; such pixels are 0.
    pub uncovered: Array2<bool>,
}

impl Reassembled {
    pub fn uncovered_count(&self) -> usize {
        self.uncovered.iter().filter(|&&u| u).count()
    }
}

/// Averages overlapping patch values into an `height x width` image.
pub fn reassemble(
    patches: ArrayView2<f64>,
    positions: &[(usize, usize)],
    height: usize,
    width: usize,
    pc: &PatchConfig,
) -> Result<Reassembled> {
    pc.validate()?;
    if patches.nrows() != pc.dim() {
        return Err(Error::mismatch(
            "patch dimension",
            pc.dim(),
            patches.nrows(),
        ));
    }
    if patches.ncols() != positions.len() {
        return Err(Error::mismatch(
            "patch positions",
            patches.ncols(),
            positions.len(),
        ));
    }
    let p = pc.patch;
    let mut sum = Array2::<f64>::zeros((height, width));
    let mut count = Array2::<u32>::zeros((height, width));
    for (col, &(r, c)) in patches.axis_iter(Axis(1)).zip(positions) {
        if r + p > height || c + p > width {
            return Err(Error::OutOfBounds {
                row: r,
                col: c,
                height,
                width,
            });
        }
        for dc in 0..p {
            for dr in 0..p {
                sum[[r + dr, c + dc]] += col[dc * p + dr];
                count[[r + dr, c + dc]] += 1;
            }
        }
    }
    let pixels = Array2::from_shape_fn((height, width), |ij| {
        if count[ij] == 0 {
            0.0
        } else {
            sum[ij] / count[ij] as f64
        }
    });
    Ok(Reassembled {
        image: GrayImage::new(pixels, "reassembled")?,
        uncovered: count.mapv(|k| k == 0),
    })
}

fn check_same_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.pixels.dim() != b.pixels.dim() {
        return Err(Error::mismatch(
            "image dimensions",
            format!("{:?}", a.pixels.dim()),
            format!("{:?}", b.pixels.dim()),
        ));
    }
    Ok(())
}

/// `10 log10(255^2 / MSE)`, `+inf` for identical images.
pub fn psnr(img: &GrayImage, reference: &GrayImage) -> Result<f64> {
    check_same_dims(img, reference)?;
    let mse = img
        .pixels
        .iter()
        .zip(reference.pixels.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / img.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Loads PGM, PNG or any grayscale-convertible format.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let pixels = Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32)[0] as f64
    });
    GrayImage::new(pixels, path.display().to_string())
}

fn to_luma8(img: &GrayImage) -> image::GrayImage {
    image::GrayImage::from_fn(img.width() as u32, img.height() as u32, |c, r| {
        image::Luma([img.pixels[[r as usize, c as usize]]
            .clamp(0.0, 255.0)
            .round() as u8])
    })
}

/// Writes 8-bit binary PGM (P5), clamping to `[0, 255]`.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = image::codecs::pnm::PnmEncoder::new(std::io::BufWriter::new(file)).with_subtype(
        image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary),
    );
    let buf = to_luma8(img);
    enc.encode(
        buf.as_raw().as_slice(),
        buf.width(),
        buf.height(),
        image::ExtendedColorType::L8,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    to_luma8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> GrayImage {
        GrayImage::new(
            Array2::from_shape_fn((h, w), |(r, c)| (r * w + c) as f64),
            "ramp",
        )
        .unwrap()
    }

    #[test]
    fn patch_counts() {
        let pc = PatchConfig::default();
        let one = extract_patches(&ramp(10, 10), &pc).unwrap();
        assert_eq!(one.n_samples(), 1);
        let expect: Vec<f64> = ramp(10, 10).pixels().t().iter().cloned().collect();
        assert_eq!(one.data().column(0).to_vec(), expect);
        assert_eq!(extract_patches(&ramp(12, 12), &pc).unwrap().n_samples(), 9);
        assert!(matches!(
            extract_patches(&ramp(9, 12), &pc),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn scan_order_is_row_major() {
        let pc = PatchConfig {
            patch: 2,
            stride: 1,
        };
        let x = extract_patches(&ramp(3, 4), &pc).unwrap();
        let pos = patch_positions(&x).unwrap();
        assert_eq!(pos, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]);
        // column-major inside the patch: (0,0), (1,0), (0,1), (1,1)
        assert_eq!(x.data().column(1).to_vec(), vec![1.0, 5.0, 2.0, 6.0]);
    }

    #[test]
    fn constant_image_identical_patches() {
        let img = GrayImage::new(Array2::from_elem((14, 13), 42.0), "c").unwrap();
        let x = extract_patches(&img, &PatchConfig::default()).unwrap();
        assert!(x.data().iter().all(|&v| v == 42.0));
    }

    #[test]
    fn overlapping_constants_average() {
        let pc = PatchConfig {
            patch: 2,
            stride: 1,
        };
        let mut patches = Array2::zeros((4, 2));
        patches.column_mut(1).fill(10.0);
        let out = reassemble(patches.view(), &[(0, 0), (0, 1)], 2, 3, &pc).unwrap();
        assert_eq!(out.image.pixels().column(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(out.image.pixels().column(1).to_vec(), vec![5.0, 5.0]);
        assert_eq!(out.image.pixels().column(2).to_vec(), vec![10.0, 10.0]);
        assert_eq!(out.uncovered_count(), 0);
    }

    #[test]
    fn uncovered_pixels_flagged() {
        let pc = PatchConfig {
            patch: 2,
            stride: 1,
        };
        let patches = Array2::from_elem((4, 1), 7.0);
        let out = reassemble(patches.view(), &[(1, 1)], 4, 4, &pc).unwrap();
        assert_eq!(out.uncovered_count(), 12);
        assert_eq!(out.image.pixels()[[0, 0]], 0.0);
        assert_eq!(out.image.pixels()[[2, 2]], 7.0);
        assert!(matches!(
            reassemble(patches.view(), &[(3, 0)], 4, 4, &pc),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn psnr_examples() {
        let a = GrayImage::new(Array2::zeros((4, 4)), "a").unwrap();
        let b = GrayImage::new(Array2::from_elem((4, 4), 255.0), "b").unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &b).unwrap().abs() < 1e-12);
        let c = GrayImage::new(Array2::zeros((4, 5)), "c").unwrap();
        assert!(psnr(&a, &c).is_err());
    }
}
