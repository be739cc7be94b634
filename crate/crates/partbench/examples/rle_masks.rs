//! Mask basics: build a dense mask, run-length code it, and measure
//! overlap.
//!
//! ```bash
//! cargo run -p partbench --example rle_masks
//! ```

use partbench::mask::{iou, rle_decode, rle_encode, unpack_counts, BinaryMask};

fn main() {
    // An 8x8 mask with a 4x4 square in the top-left corner.
    let square = BinaryMask::from_fn(8, 8, |r, c| r < 4 && c < 4).unwrap();
    let rle = rle_encode(&square);
    println!("square area      : {} px", square.area());
    println!("square bbox      : {:?}", square.bbox());
    println!("rle counts       : {:?}", rle.counts());
    println!("decodes back     : {}", rle_decode(&rle) == square);

    // JSON form, as it appears inside question and response files.
    println!("rle as json      : {}", serde_json::to_string(&rle).unwrap());

    // The packed COCO string form is accepted on read.
    let packed: partbench::mask::MaskRle =
        serde_json::from_str(r#"{"size":[8,8],"counts":"04<000P9"}"#).unwrap();
    println!("packed counts    : {:?}", packed.counts());
    println!(
        "unpack direct    : {:?}",
        unpack_counts("04<000P9").unwrap()
    );

    // IoU against a shifted copy.
    let shifted = BinaryMask::from_fn(8, 8, |r, c| (2..6).contains(&r) && (2..6).contains(&c))
        .unwrap();
    println!(
        "iou(square, shifted 2px) = {:.4}",
        iou(&square, &shifted).unwrap()
    );
}
