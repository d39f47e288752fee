//! Numbered slice directories.

use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use slicereg::{BinaryMask, GrayImage};

use crate::errors::InputError;

const EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

/// The last run of digits in the file stem.
fn slice_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end].rfind(|c: char| !c.is_ascii_digit()).map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

/// Raster files in `dir`, ordered by the number in their names.
pub fn list_slices(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| InputError(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut numbered = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let n = slice_number(&path)
            .ok_or_else(|| InputError(format!("{} has no slice number in its name", path.display())))?;
        numbered.push((n, path));
    }
    numbered.sort();
    if let Some(w) = numbered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(InputError(format!("{} and {} share slice number {}", w[0].1.display(), w[1].1.display(), w[0].0)).into());
    }
    if numbered.is_empty() {
        return Err(InputError(format!("no PNG or TIFF slices in {}", dir.display())).into());
    }
    Ok(numbered.into_iter().map(|(_, p)| p).collect())
}

fn check_dims(paths: &[PathBuf], dims: &[(usize, usize)]) -> anyhow::Result<()> {
    if let Some(i) = dims.iter().position(|d| *d != dims[0]) {
        return Err(InputError(format!(
            "{} is {}x{} but {} is {}x{}; every slice must share one size",
            paths[i].display(),
            dims[i].0,
            dims[i].1,
            paths[0].display(),
            dims[0].0,
            dims[0].1
        ))
        .into());
    }
    Ok(())
}

pub fn load_gray_stack(paths: &[PathBuf]) -> anyhow::Result<Vec<GrayImage>> {
    let images = paths
        .par_iter()
        .map(|p| slicereg::io::load_gray(p).with_context(|| format!("loading slice {}", p.display())))
        .collect::<anyhow::Result<Vec<GrayImage>>>()?;
    check_dims(paths, &images.iter().map(|i| i.dims()).collect::<Vec<_>>())?;
    Ok(images)
}

pub fn load_mask_stack(paths: &[PathBuf]) -> anyhow::Result<Vec<BinaryMask>> {
    let masks = paths
        .par_iter()
        .map(|p| slicereg::io::load_mask(p).with_context(|| format!("loading mask {}", p.display())))
        .collect::<anyhow::Result<Vec<BinaryMask>>>()?;
    check_dims(paths, &masks.iter().map(|m| m.dims()).collect::<Vec<_>>())?;
    Ok(masks)
}

/// `<dir>/<stem of source>.png`
pub fn output_path(dir: &Path, source: &Path) -> PathBuf {
    let stem = source.file_stem().map_or_else(|| "slice".into(), |s| s.to_string_lossy().into_owned());
    dir.join(format!("{stem}.png"))
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_come_from_the_last_digit_run() {
        assert_eq!(slice_number(Path::new("a/slice_007.png")), Some(7));
        assert_eq!(slice_number(Path::new("s2_sec12.tif")), Some(12));
        assert_eq!(slice_number(Path::new("12b.png")), Some(12));
        assert_eq!(slice_number(Path::new("slice.png")), None);
    }

    #[test]
    fn listing_orders_numerically() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(4, 3, 9.0);
        for name in ["s10.png", "s9.png", "s100.tif"] {
            slicereg::io::save_gray(&img, &dir.path().join(name)).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let names: Vec<String> = list_slices(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["s9.png", "s10.png", "s100.tif"]);
    }

    #[test]
    fn duplicate_numbers_and_size_mismatch_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        slicereg::io::save_gray(&GrayImage::filled(4, 3, 0.0), &dir.path().join("a1.png")).unwrap();
        slicereg::io::save_gray(&GrayImage::filled(4, 3, 0.0), &dir.path().join("b01.png")).unwrap();
        assert!(list_slices(dir.path()).unwrap_err().to_string().contains("share slice number 1"));

        std::fs::remove_file(dir.path().join("b01.png")).unwrap();
        slicereg::io::save_gray(&GrayImage::filled(5, 3, 0.0), &dir.path().join("a2.png")).unwrap();
        let paths = list_slices(dir.path()).unwrap();
        let err = load_gray_stack(&paths).unwrap_err();
        assert!(err.to_string().contains("a2.png"), "{err}");
        assert!(err.downcast_ref::<InputError>().is_some());
    }
}
