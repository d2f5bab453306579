//! Directory layout:
//!
//! ```text
//! root/images/<stem>.png   8-bit grayscale
//! root/masks/<stem>.png    0 / 255
//! root/meta.csv            stem,target_count,areas,scrs (optional)
//! root/splits/<split>.txt  one stem per line (optional)
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};

/// Which part of a dataset directory to load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Layout {
    /// Restrict to the stems listed in `splits/<split>.txt`.
    pub split: Option<Split>,
}

/// Mask values outside this distance from 0 or 255 are reported.
const MASK_TOLERANCE: u8 = 16;

fn read_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw()))
}

fn png_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let mut stems = BTreeSet::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(stem.to_string());
            }
        }
    }
    Ok(stems)
}

/// Loads pairs in lexicographic stem order; masks are binarized at 128.
pub fn load_dataset(root: &Path, layout: &Layout) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::Data(format!("dataset directory {} not found", root.display())));
    }
    let images = root.join("images");
    if !images.is_dir() {
        log::warn!("{} has no images/ directory; dataset is empty", root.display());
        return Ok(Dataset { items: Vec::new(), split: layout.split });
    }
    let mut stems = png_stems(&images)?;
    if let Some(split) = layout.split {
        let list = root.join("splits").join(format!("{split}.txt"));
        let text = fs::read_to_string(&list).map_err(|e| Error::Data(format!("cannot read {}: {e}", list.display())))?;
        let wanted: BTreeSet<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        if let Some(missing) = wanted.difference(&stems).next() {
            return Err(Error::Data(format!("split {split} lists `{missing}` which has no image")));
        }
        stems = wanted;
    }
    if stems.is_empty() {
        log::warn!("no images found under {}", images.display());
    }
    let mut items = Vec::with_capacity(stems.len());
    let mut off_binary = 0usize;
    for stem in stems {
        let mask_path = root.join("masks").join(format!("{stem}.png"));
        if !mask_path.is_file() {
            return Err(Error::Pairing { stem });
        }
        let (h, w, raw) = read_gray(&images.join(format!("{stem}.png")))?;
        let image = GrayImage::from_u8(h, w, &raw)?;
        let (mh, mw, mraw) = read_gray(&mask_path)?;
        if (mh, mw) != (h, w) {
            return Err(Error::Dimension { expected: (h, w), found: (mh, mw) });
        }
        off_binary += mraw.iter().filter(|&&v| v > MASK_TOLERANCE && v < 255 - MASK_TOLERANCE).count();
        let mask = BinaryMask::new(
            ndarray::Array2::from_shape_vec((h, w), mraw.iter().map(|&v| u8::from(v >= 128)).collect())
                .map_err(|e| Error::Data(e.to_string()))?,
        )?;
        items.push(Sample { stem, image, mask, meta: None });
    }
    if off_binary > 0 {
        log::warn!("{off_binary} mask pixels were neither near 0 nor near 255; binarized at 128");
    }
    Dataset::new(items, layout.split)
}

fn save_gray(path: &Path, h: usize, w: usize, raw: Vec<u8>) -> Result<()> {
    let buf = image::GrayImage::from_raw(w as u32, h as u32, raw).ok_or_else(|| Error::Data("buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Writes every item of every part; parts carrying a split tag also get a
/// split list. `meta.csv` is written when any item has scene metadata.
pub fn write_dataset(root: &Path, parts: &[&Dataset]) -> Result<()> {
    fs::create_dir_all(root.join("images"))?;
    fs::create_dir_all(root.join("masks"))?;
    let mut meta_rows = Vec::new();
    for part in parts {
        for s in &part.items {
            let (h, w) = s.image.shape();
            save_gray(&root.join("images").join(format!("{}.png", s.stem)), h, w, s.image.to_u8())?;
            save_gray(&root.join("masks").join(format!("{}.png", s.stem)), h, w, s.mask.pixels().iter().map(|&v| v * 255).collect())?;
            if let Some(m) = &s.meta {
                let areas: Vec<String> = m.targets.iter().map(|t| t.area.to_string()).collect();
                let scrs: Vec<String> = m.targets.iter().map(|t| format!("{:.4}", t.achieved_scr)).collect();
                meta_rows.push(format!("{},{},{},{}", s.stem, m.targets.len(), areas.join(";"), scrs.join(";")));
            }
        }
        if let Some(split) = part.split {
            fs::create_dir_all(root.join("splits"))?;
            let mut text = String::new();
            for s in &part.items {
                let _ = writeln!(text, "{}", s.stem);
            }
            fs::write(root.join("splits").join(format!("{split}.txt")), text)?;
        }
    }
    if !meta_rows.is_empty() {
        meta_rows.sort();
        let mut text = String::from("stem,target_count,areas,scrs\n");
        for r in meta_rows {
            text.push_str(&r);
            text.push('\n');
        }
        fs::write(root.join("meta.csv"), text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SceneParams};

    #[test]
    fn empty_directory_gives_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path(), &Layout::default()).unwrap().is_empty());
        fs::create_dir_all(dir.path().join("images")).unwrap();
        assert!(load_dataset(dir.path(), &Layout::default()).unwrap().is_empty());
    }

    #[test]
    fn missing_root_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(&dir.path().join("nope"), &Layout::default()), Err(Error::Data(_))));
    }

    #[test]
    fn round_trip_matches_quantized_items() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth_dataset(&SceneParams::default(), 6, 2).unwrap();
        let (a, b) = crate::data::resplit(&d, 0.5, 1).unwrap();
        write_dataset(dir.path(), &[&a, &b]).unwrap();
        let back = load_dataset(dir.path(), &Layout::default()).unwrap();
        assert_eq!(back.len(), 6);
        for (orig, got) in d.items.iter().zip(&back.items) {
            assert_eq!(orig.stem, got.stem);
            assert_eq!(orig.mask, got.mask);
            assert_eq!(orig.image.to_u8(), got.image.to_u8());
        }
        let train = load_dataset(dir.path(), &Layout { split: Some(Split::Train) }).unwrap();
        assert_eq!(train.len(), 3);
        assert!(dir.path().join("meta.csv").is_file());
    }

    #[test]
    fn unpaired_image_names_the_stem() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth_dataset(&SceneParams::default(), 2, 2).unwrap();
        write_dataset(dir.path(), &[&d]).unwrap();
        fs::remove_file(dir.path().join("masks/scene_00001.png")).unwrap();
        match load_dataset(dir.path(), &Layout::default()) {
            Err(Error::Pairing { stem }) => assert_eq!(stem, "scene_00001"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn soft_masks_are_thresholded() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("images")).unwrap();
        fs::create_dir_all(dir.path().join("masks")).unwrap();
        save_gray(&dir.path().join("images/a.png"), 1, 3, vec![10, 20, 30]).unwrap();
        save_gray(&dir.path().join("masks/a.png"), 1, 3, vec![0, 127, 200]).unwrap();
        let d = load_dataset(dir.path(), &Layout::default()).unwrap();
        assert_eq!(d.items[0].mask.pixels().iter().copied().collect::<Vec<_>>(), vec![0, 0, 1]);
    }
}
