//! The token sheet: every class exemplar in a grid with its placeholder
//! printed underneath, using the fixed 8×8 bitmap font from `font8x8` so
//! output bytes do not depend on the platform.

use font8x8::legacy::BASIC_LEGACY;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::classify::TokenInventory;
use crate::raster::{encode_png, GrayRaster};

const FONT_PX: usize = 8;
/// Background kept around each glyph inside its cell.
const GLYPH_MARGIN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SheetLayout {
    pub columns: usize,
    /// Width and height of the glyph area of each cell.
    pub cell_px: usize,
    /// Height of the label strip under each glyph.
    pub label_px: usize,
}

impl Default for SheetLayout {
    fn default() -> Self {
        Self {
            columns: 4,
            cell_px: 104,
            label_px: 16,
        }
    }
}

impl SheetLayout {
    /// Integer scale at which a `side`-cell exemplar is drawn.
    pub fn glyph_scale(&self, side: usize) -> Result<usize, DatasetError> {
        let scale = self.cell_px.saturating_sub(2 * GLYPH_MARGIN) / side.max(1);
        if scale == 0 {
            return Err(DatasetError::LayoutTooSmall(format!(
                "cell_px {} cannot hold a {side}-pixel glyph with {GLYPH_MARGIN}px margins",
                self.cell_px
            )));
        }
        Ok(scale)
    }

    /// Top-left pixel of the glyph drawn in cell `i`.
    pub fn glyph_origin(&self, i: usize, side: usize) -> Result<(usize, usize), DatasetError> {
        let scale = self.glyph_scale(side)?;
        let inset = (self.cell_px - side * scale) / 2;
        let (col, row) = (i % self.columns, i / self.columns);
        Ok((col * self.cell_px + inset, row * (self.cell_px + self.label_px) + inset))
    }

    fn label_scale(&self, text: &str) -> Result<usize, DatasetError> {
        let text_px = text.chars().count() * FONT_PX;
        let scale = (self.label_px / FONT_PX).min(self.cell_px / text_px.max(1));
        if scale == 0 {
            return Err(DatasetError::LayoutTooSmall(format!(
                "label {text:?} needs {text_px}x{FONT_PX}px but the label area is {}x{}",
                self.cell_px, self.label_px
            )));
        }
        Ok(scale)
    }
}

pub fn render_token_sheet(inventory: &TokenInventory, layout: &SheetLayout) -> Result<Vec<u8>, DatasetError> {
    Ok(encode_png(&render_token_sheet_raster(inventory, layout)?))
}

pub fn render_token_sheet_raster(
    inventory: &TokenInventory,
    layout: &SheetLayout,
) -> Result<GrayRaster, DatasetError> {
    if inventory.is_empty() {
        return Err(DatasetError::EmptyInventory);
    }
    if layout.columns == 0 {
        return Err(DatasetError::LayoutTooSmall("columns must be >= 1".into()));
    }
    let rows = inventory.len().div_ceil(layout.columns);
    let width = layout.columns * layout.cell_px;
    let height = rows * (layout.cell_px + layout.label_px);
    let mut px = vec![255u8; width * height];

    for class in &inventory.classes {
        let i = class.class_id;
        let side = class.exemplar.side();
        let scale = layout.glyph_scale(side)?;
        let (gx, gy) = layout.glyph_origin(i, side)?;
        for y in 0..side * scale {
            for x in 0..side * scale {
                if class.exemplar.get(x / scale, y / scale) {
                    px[(gy + y) * width + gx + x] = 0;
                }
            }
        }

        let label = class.placeholder();
        let ls = layout.label_scale(&label)?;
        let text_w = label.chars().count() * FONT_PX * ls;
        let (col, row) = (i % layout.columns, i / layout.columns);
        let lx = col * layout.cell_px + (layout.cell_px - text_w) / 2;
        let ly = row * (layout.cell_px + layout.label_px)
            + layout.cell_px
            + (layout.label_px - FONT_PX * ls) / 2;
        for (ci, ch) in label.chars().enumerate() {
            let bitmap = BASIC_LEGACY[(ch as usize) & 0x7f];
            for (fy, bits) in bitmap.iter().enumerate() {
                for fx in 0..FONT_PX {
                    if bits & (1 << fx) == 0 {
                        continue;
                    }
                    for dy in 0..ls {
                        for dx in 0..ls {
                            let x = lx + (ci * FONT_PX + fx) * ls + dx;
                            let y = ly + fy * ls + dy;
                            px[y * width + x] = 0;
                        }
                    }
                }
            }
        }
    }
    Ok(GrayRaster::new(width, height, px).expect("dimensions are non-zero"))
}
