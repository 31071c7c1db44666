pub mod alphabet;
pub mod classify;
pub mod error;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod modelfile;
pub mod nrc;
pub mod quantize;
pub mod sequence;
pub mod synth;

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub struct $name;
        };
    }
    chapter!(Introduction, "introduction.md");
    chapter!(Sequences, "sequences.md");
    chapter!(Model, "model.md");
    chapter!(Alpha, "alpha.md");
    chapter!(Compression, "compression.md");
    chapter!(Quantization, "quantization.md");
    chapter!(Classification, "classification.md");
    chapter!(Matrices, "matrices.md");
    chapter!(Cli, "cli.md");
}
