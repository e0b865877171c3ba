//! Synthetic disc/stripe corpus written as PPM images with PGM masks.

use std::path::{Path, PathBuf};

use ldmres::io::{save_image, save_mask};
use ldmres::train::Sample;
use ldmres::{Mask, Tensor4};

pub fn shape_mask(kind: usize, size: usize) -> Mask {
    let s = size as f32 / 64.0;
    let disc = |y: usize, x: usize, cy: f32, cx: f32, r: f32| {
        (y as f32 - cy * s).powi(2) + (x as f32 - cx * s).powi(2) < (r * s).powi(2)
    };
    Mask::from_fn(size, size, |y, x| match kind % 4 {
        0 => disc(y, x, 30.0, 34.0, 14.0),
        1 => disc(y, x, 20.0, 40.0, 11.0) || disc(y, x, 46.0, 18.0, 9.5),
        2 => ((x as f32 / s) as usize / 6) % 2 == 0,
        _ => (((x + y) as f32 / s) as usize / 8) % 2 == 0,
    })
}

/// RGB rendering of a mask: brighter foreground plus deterministic texture.
pub fn render(mask: &Mask, salt: usize) -> Tensor4 {
    Tensor4::from_fn([1, 3, mask.height(), mask.width()], |_, c, y, x| {
        let fg = mask.get(y, x) as u8 as f32;
        let noise = (((y * 131 + x * 71 + c * 17 + salt * 7) % 23) as f32 / 23.0 - 0.5) * 0.2;
        (0.3 + 0.4 * fg + noise + 0.05 * c as f32).clamp(0.0, 1.0)
    })
}

/// Two discs and two stripe patterns.
pub fn corpus(size: usize) -> Vec<Sample> {
    (0..4)
        .map(|k| {
            let mask = shape_mask(k, size);
            let image = render(&mask, k);
            Sample::new(image, mask, None, format!("synthetic{k}")).unwrap()
        })
        .collect()
}

/// Writes `count` samples plus `list.tsv` into `dir`; returns the manifest path.
pub fn write_corpus(dir: &Path, size: usize, count: usize) -> PathBuf {
    let mut list = String::from("# image\tmask\n");
    for k in 0..count {
        let mask = shape_mask(k, size);
        let img = format!("img{k}.ppm");
        let gt = format!("mask{k}.pgm");
        save_image(&render(&mask, k), dir.join(&img)).unwrap();
        save_mask(&mask, dir.join(&gt)).unwrap();
        list.push_str(&format!("{img}\t{gt}\n"));
    }
    let path = dir.join("list.tsv");
    std::fs::write(&path, list).unwrap();
    path
}
