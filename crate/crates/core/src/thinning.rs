//! Binary morphology on row-major boolean rasters: Zhang–Suen thinning and a
//! 3×3 closing.

/// Zhang–Suen thinning, iterated to a fixpoint. Pixels outside the raster
/// count as background.
pub(crate) fn zhang_suen(img: &[bool], height: usize, width: usize) -> Vec<bool> {
    debug_assert_eq!(img.len(), height * width);
    let mut cur = img.to_vec();
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            to_clear.clear();
            for r in 0..height {
                for c in 0..width {
                    if !cur[r * width + c] {
                        continue;
                    }
                    let n = neighbours(&cur, height, width, r, c);
                    let b: u32 = n.iter().map(|&x| x as u32).sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&k| !n[k] && n[(k + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    // n = [P2, P3, P4, P5, P6, P7, P8, P9]: N, NE, E, SE, S, SW, W, NW
                    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                    let keep = if pass == 0 {
                        (p2 && p4 && p6) || (p4 && p6 && p8)
                    } else {
                        (p2 && p4 && p8) || (p2 && p6 && p8)
                    };
                    if !keep {
                        to_clear.push(r * width + c);
                    }
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for &i in &to_clear {
                    cur[i] = false;
                }
            }
        }
        if !changed {
            return cur;
        }
    }
}

fn neighbours(img: &[bool], h: usize, w: usize, r: usize, c: usize) -> [bool; 8] {
    let at = |dr: isize, dc: isize| -> bool {
        let rr = r as isize + dr;
        let cc = c as isize + dc;
        rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && img[rr as usize * w + cc as usize]
    };
    [
        at(-1, 0),
        at(-1, 1),
        at(0, 1),
        at(1, 1),
        at(1, 0),
        at(1, -1),
        at(0, -1),
        at(-1, -1),
    ]
}

/// 3×3 closing (dilate, then erode). The erosion treats out-of-raster pixels
/// as foreground, so closing never removes a set pixel.
pub(crate) fn close3(img: &[bool], height: usize, width: usize) -> Vec<bool> {
    let dilated = window3(img, height, width, false, |acc, v| acc || v, false);
    window3(&dilated, height, width, true, |acc, v| acc && v, true)
}

fn window3(
    img: &[bool],
    h: usize,
    w: usize,
    outside: bool,
    fold: impl Fn(bool, bool) -> bool,
    init: bool,
) -> Vec<bool> {
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = init;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let rr = r as isize + dr;
                    let cc = c as isize + dc;
                    let v = if rr < 0 || cc < 0 || rr as usize >= h || cc as usize >= w {
                        outside
                    } else {
                        img[rr as usize * w + cc as usize]
                    };
                    acc = fold(acc, v);
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(rows: &[&str]) -> (Vec<bool>, usize, usize) {
        let h = rows.len();
        let w = rows[0].len();
        let v = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        (v, h, w)
    }

    #[test]
    fn line_is_a_fixpoint() {
        let (img, h, w) = raster(&[".......", ".#####.", "......."]);
        assert_eq!(zhang_suen(&img, h, w), img);
        let (diag, h, w) = raster(&["#....", ".#...", "..#..", "...#.", "....#"]);
        assert_eq!(zhang_suen(&diag, h, w), diag);
    }

    #[test]
    fn filled_square_thins_and_is_idempotent() {
        let mut img = vec![false; 13 * 13];
        for r in 2..11 {
            for c in 2..11 {
                img[r * 13 + c] = true;
            }
        }
        let once = zhang_suen(&img, 13, 13);
        let count = once.iter().filter(|&&b| b).count();
        assert!(count > 0 && count < 81, "count {count}");
        assert_eq!(zhang_suen(&once, 13, 13), once);
    }

    #[test]
    fn thick_band_thins_to_center_column() {
        let rows: Vec<String> = (0..9).map(|r| if r == 0 || r == 8 { ".......".into() } else { "..###..".into() }).collect();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let (img, h, w) = raster(&refs);
        let thin = zhang_suen(&img, h, w);
        // the result is a one-pixel-wide center column (Zhang-Suen shortens
        // the ends of a band a little)
        for (i, &on) in thin.iter().enumerate() {
            assert!(!on || i % w == 3, "pixel {i} off the center column");
        }
        assert!(thin.iter().filter(|&&b| b).count() >= 3);
        assert_eq!(zhang_suen(&thin, h, w), thin);
    }

    #[test]
    fn closing_fills_one_pixel_gaps_only() {
        let (img, h, w) = raster(&[".......", ".#.#...", "......."]);
        let closed = close3(&img, h, w);
        assert!(closed[w + 2]);
        assert!(!closed[w + 5]);
        assert!(img.iter().zip(&closed).all(|(&a, &b)| !a || b));
    }
}
