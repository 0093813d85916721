//! The 16x16 tile primitives: a single multiply-accumulate, then a padded
//! tiled product checked against a plain triple loop.

use anyhow::Result;
use fasttucker::tile::{matmul_tiled, tile_mma, Tile, TiledMatrix};

fn main() -> Result<()> {
    let a = Tile::from_fn(|i, j| (i + j) as f32 / 16.0);
    let c = tile_mma(&a, &Tile::identity(), &Tile::splat(1.0));
    println!("A*I + 1 at (3,5): {} (expect {})", c.get(3, 5), a.get(3, 5) + 1.0);

    // 37x21 times 21x50: every dimension needs padding to a tile multiple.
    let (rows, inner, cols) = (37, 21, 50);
    let x = TiledMatrix::from_fn(rows, inner, |i, j| ((i * 7 + j) % 11) as f32 - 5.0);
    let y = TiledMatrix::from_fn(inner, cols, |i, j| ((i + 3 * j) % 5) as f32 * 0.5);
    let z = matmul_tiled(&x, &y)?;
    println!("grid {:?}, padded {}x{}", z.grid(), z.padded_rows(), z.padded_cols());

    let mut worst = 0.0f32;
    for i in 0..rows {
        for j in 0..cols {
            let want: f32 = (0..inner).map(|p| x.get(i, p) * y.get(p, j)).sum();
            worst = worst.max((z.get(i, j) - want).abs());
        }
    }
    println!("max deviation from the naive product: {worst:e}; padding zero: {}", z.padding_is_zero());
    Ok(())
}
