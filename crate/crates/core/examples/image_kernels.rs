//! Blur score, entropy, circular crop and near-duplicate fingerprints on a
//! generated test card.

use otopipe::imaging::{box_blur, circular_crop, fingerprint, hamming, laplacian_variance, shannon_entropy, GrayImage};

fn main() -> otopipe::Result<()> {
    let card = GrayImage::from_fn(96, 96, |x, y| if (x / 8 + y / 8) % 2 == 0 { 40 } else { 210 })?;
    let soft = box_blur(&card, 5);
    let cropped = circular_crop(&card, 0);

    println!("{:<10} {:>14} {:>8}", "image", "laplacian var", "entropy");
    for (name, img) in [("sharp", &card), ("blurred", &soft), ("cropped", &cropped)] {
        println!("{name:<10} {:>14.1} {:>8.3}", laplacian_variance(img)?, shannon_entropy(img));
    }

    let inverted = GrayImage::from_fn(96, 96, |x, y| 250 - card.get(x, y))?;
    let (a, b, c) = (fingerprint(&card)?, fingerprint(&soft)?, fingerprint(&inverted)?);
    println!("hamming(sharp, blurred)  = {}", hamming(&a, &b));
    println!("hamming(sharp, inverted) = {}", hamming(&a, &c));
    Ok(())
}
