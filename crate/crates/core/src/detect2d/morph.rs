use crate::projection::Projection;

/// Zhang-Suen thinning of a binary map (> 0.5 is foreground) to
/// one-pixel-wide 8-connected curves.
pub fn thin_binary(map: &Projection) -> Projection {
    let (rows, cols) = (map.rows(), map.cols());
    let mut img: Vec<bool> = map.data().iter().map(|v| *v > 0.5).collect();
    let at = |img: &[bool], y: isize, x: isize| {
        y >= 0 && x >= 0 && (y as usize) < rows && (x as usize) < cols && img[y as usize * cols + x as usize]
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..rows as isize {
                for x in 0..cols as isize {
                    if !at(&img, y, x) {
                        continue;
                    }
                    // P2..P9 clockwise from north.
                    let p = [
                        at(&img, y - 1, x),
                        at(&img, y - 1, x + 1),
                        at(&img, y, x + 1),
                        at(&img, y + 1, x + 1),
                        at(&img, y + 1, x),
                        at(&img, y + 1, x - 1),
                        at(&img, y, x - 1),
                        at(&img, y - 1, x - 1),
                    ];
                    let b = p.iter().filter(|v| **v).count();
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    let (c1, c2) = if pass == 0 {
                        (!(p[0] && p[2] && p[4]), !(p[2] && p[4] && p[6]))
                    } else {
                        (!(p[0] && p[2] && p[6]), !(p[0] && p[4] && p[6]))
                    };
                    if (2..=6).contains(&b) && a == 1 && c1 && c2 {
                        remove.push(y as usize * cols + x as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                img[i] = false;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = map.clone();
    out.data_mut().iter_mut().zip(&img).for_each(|(v, b)| *v = if *b { 1.0 } else { 0.0 });
    out
}

/// Binary dilation with a `(2r + 1)²` square.
pub fn dilate_binary(map: &Projection, r: usize) -> Projection {
    let (rows, cols) = (map.rows(), map.cols());
    let mut out = map.map(|_| 0.0);
    for y in 0..rows {
        for x in 0..cols {
            if map.get(y, x) <= 0.5 {
                continue;
            }
            for yy in y.saturating_sub(r)..(y + r + 1).min(rows) {
                for xx in x.saturating_sub(r)..(x + r + 1).min(cols) {
                    out.set(yy, xx, 1.0);
                }
            }
        }
    }
    out
}
