use image::{Rgb, RgbImage};

use super::png::to_rgb8;
use crate::engine::Snapshot;
use crate::image::ImageGrid;

const GAP: u32 = 2;

/// One row per mainline step with each prompt's rollout input beside its
/// idealized image, followed by a row of final outputs.
pub fn contact_sheet(snapshots: &[Snapshot], finals: &[ImageGrid]) -> RgbImage {
    let mut rows: Vec<Vec<&ImageGrid>> = snapshots
        .iter()
        .map(|s| s.inputs.iter().zip(&s.rollouts).flat_map(|(a, b)| [a, b]).collect())
        .collect();
    rows.push(finals.iter().collect());

    let cell_h = rows.iter().flatten().map(|g| g.height() as u32).max().unwrap_or(1);
    let cell_w = rows.iter().flatten().map(|g| g.width() as u32).max().unwrap_or(1);
    let cols = rows.iter().map(Vec::len).max().unwrap_or(1).max(1) as u32;
    let width = cols * cell_w + (cols + 1) * GAP;
    let height = rows.len() as u32 * cell_h + (rows.len() as u32 + 1) * GAP;
    let mut sheet = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    for (r, row) in rows.iter().enumerate() {
        for (c, grid) in row.iter().enumerate() {
            let x0 = GAP + c as u32 * (cell_w + GAP);
            let y0 = GAP + r as u32 * (cell_h + GAP);
            image::imageops::replace(&mut sheet, &to_rgb8(grid), x0 as i64, y0 as i64);
        }
    }
    sheet
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Space;

    #[test]
    fn layout() {
        let g = ImageGrid::filled(4, 6, 3, 0.0, Space::Pixel).unwrap();
        let snap = Snapshot {
            t: 1,
            inputs: vec![g.clone(), g.clone()],
            rollouts: vec![g.clone(), g.clone()],
        };
        let sheet = contact_sheet(&[snap.clone(), snap], &[g.clone(), g]);
        assert_eq!(sheet.dimensions(), (4 * 6 + 5 * GAP, 3 * 4 + 4 * GAP));
        assert_eq!(sheet.get_pixel(0, 0).0, [255; 3]);
        assert_eq!(sheet.get_pixel(GAP, GAP).0, [0; 3]);
    }
}
