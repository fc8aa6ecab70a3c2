//! PNG interchange: 8-bit RGB images in, 16-bit grayscale instance maps in
//! and out.

use std::path::Path;

use anyhow::{bail, Context};
use image::{DynamicImage, ImageBuffer, Luma};
use nucseg_core::coarse::RgbImage;
use nucseg_core::{InstanceMap, Raster};

fn open(path: &Path) -> anyhow::Result<DynamicImage> {
    image::open(path).with_context(|| path.display().to_string())
}

pub fn read_rgb(path: &Path) -> anyhow::Result<RgbImage> {
    let img = match open(path)? {
        DynamicImage::ImageRgb8(i) => i,
        DynamicImage::ImageRgba8(i) => DynamicImage::ImageRgba8(i).to_rgb8(),
        DynamicImage::ImageLuma8(i) => DynamicImage::ImageLuma8(i).to_rgb8(),
        other => bail!("{}: expected an 8-bit image, found {:?}", path.display(), other.color()),
    };
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Raster::from_vec(h as usize, w as usize, data)?)
}

pub fn read_instances(path: &Path) -> anyhow::Result<InstanceMap> {
    let (w, h, data): (u32, u32, Vec<u32>) = match open(path)? {
        DynamicImage::ImageLuma16(i) => (i.width(), i.height(), i.pixels().map(|p| p.0[0] as u32).collect()),
        DynamicImage::ImageLuma8(i) => (i.width(), i.height(), i.pixels().map(|p| p.0[0] as u32).collect()),
        other => bail!(
            "{}: expected a grayscale instance map, found {:?}",
            path.display(),
            other.color()
        ),
    };
    Ok(Raster::from_vec(h as usize, w as usize, data)?)
}

pub fn write_instances(path: &Path, inst: &InstanceMap) -> anyhow::Result<()> {
    let gray = to_u16(inst)?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(inst.width() as u32, inst.height() as u32, gray.into_vec()).expect("buffer size");
    buf.save_with_format(path, image::ImageFormat::Png)
        .with_context(|| path.display().to_string())
}

/// Narrows instance ids to u16, failing on ids that do not fit.
pub fn to_u16(inst: &InstanceMap) -> anyhow::Result<Raster<u16>> {
    if let Some(&id) = inst.iter().find(|&&v| v > u16::MAX as u32) {
        bail!("instance id {id} does not fit in 16 bits");
    }
    Ok(inst.map(|&v| v as u16))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.png");
        let inst = Raster::from_vec(2, 3, vec![0, 1, 300, 65535, 2, 0]).unwrap();
        write_instances(&path, &inst).unwrap();
        assert_eq!(read_instances(&path).unwrap(), inst);
    }

    #[test]
    fn rgb_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let buf = image::RgbImage::from_fn(3, 2, |x, y| image::Rgb([x as u8, y as u8, 7]));
        buf.save(&path).unwrap();
        let img = read_rgb(&path).unwrap();
        assert_eq!(img.shape(), (2, 3));
        assert_eq!(img.get(1, 2), [2, 1, 7]);
    }
}
