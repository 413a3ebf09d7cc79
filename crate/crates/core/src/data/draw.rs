//! Distance-based rasterization onto grayscale canvases.
//!
//! The synthetic generators draw glyphs and faces from a handful of
//! primitives. A pixel is inked when its center lies within half the
//! stroke thickness of the primitive; everything is f64 so drawings are
//! bit-identical across platforms.

/// Row-major h x w grayscale canvas with values in [0, 1].
pub(crate) struct Canvas {
    pub w: usize,
    pub h: usize,
    pub px: Vec<f64>,
}

impl Canvas {
    pub fn new(w: usize, h: usize) -> Canvas {
        Canvas {
            w,
            h,
            px: vec![0.0; w * h],
        }
    }

    fn ink(&mut self, x: usize, y: usize, v: f64) {
        let cell = &mut self.px[y * self.w + x];
        if v > *cell {
            *cell = v;
        }
    }

    /// Thick line segment from (x0, y0) to (x1, y1).
    pub fn segment(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, thickness: f64) {
        let r = thickness / 2.0;
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len2 = dx * dx + dy * dy;
        let min_x = (x0.min(x1) - r).floor().max(0.0) as usize;
        let max_x = (x0.max(x1) + r).ceil().min(self.w as f64 - 1.0) as usize;
        let min_y = (y0.min(y1) - r).floor().max(0.0) as usize;
        let max_y = (y0.max(y1) + r).ceil().min(self.h as f64 - 1.0) as usize;
        for y in min_y..=max_y {
            for x in min_x..=max_x {
                let (px, py) = (x as f64, y as f64);
                let t = if len2 == 0.0 {
                    0.0
                } else {
                    (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
                };
                let (cx, cy) = (x0 + t * dx, y0 + t * dy);
                let d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                if d2 <= r * r {
                    self.ink(x, y, 1.0);
                }
            }
        }
    }

    /// Thick circular arc around (cx, cy) between angles a0 and a1
    /// (radians, counterclockwise with y pointing down the canvas).
    pub fn arc(&mut self, cx: f64, cy: f64, radius: f64, a0: f64, a1: f64, thickness: f64) {
        let r = thickness / 2.0;
        let lo_x = (cx - radius - r).floor().max(0.0) as usize;
        let hi_x = (cx + radius + r).ceil().min(self.w as f64 - 1.0) as usize;
        let lo_y = (cy - radius - r).floor().max(0.0) as usize;
        let hi_y = (cy + radius + r).ceil().min(self.h as f64 - 1.0) as usize;
        let span = a1 - a0;
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let dist = (dx * dx + dy * dy).sqrt();
                if (dist - radius).abs() > r {
                    continue;
                }
                let mut angle = dy.atan2(dx);
                while angle < a0 {
                    angle += std::f64::consts::TAU;
                }
                if angle - a0 <= span {
                    self.ink(x, y, 1.0);
                }
            }
        }
    }

    /// Filled axis-aligned ellipse.
    pub fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, value: f64) {
        let lo_x = (cx - rx).floor().max(0.0) as usize;
        let hi_x = (cx + rx).ceil().min(self.w as f64 - 1.0) as usize;
        let lo_y = (cy - ry).floor().max(0.0) as usize;
        let hi_y = (cy + ry).ceil().min(self.h as f64 - 1.0) as usize;
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                let nx = (x as f64 - cx) / rx;
                let ny = (y as f64 - cy) / ry;
                if nx * nx + ny * ny <= 1.0 {
                    self.ink(x, y, value);
                }
            }
        }
    }

    /// Filled axis-aligned rectangle, clipped to the canvas.
    pub fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, value: f64) {
        let lo_x = x0.floor().max(0.0) as usize;
        let hi_x = x1.ceil().min(self.w as f64 - 1.0) as usize;
        let lo_y = y0.floor().max(0.0) as usize;
        let hi_y = y1.ceil().min(self.h as f64 - 1.0) as usize;
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                self.ink(x, y, value);
            }
        }
    }
}
