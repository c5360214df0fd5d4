//! The book, compiled.
//!
//! Each chapter of the `book/` guide is included here as a module doc, so
//! `cargo test --doc` builds and runs every code block in the book. The
//! chapters render normally with `mdbook build book`; this module is what
//! keeps them truthful.

macro_rules! chapter {
    ($name:ident, $path:literal) => {
        #[doc = include_str!($path)]
        pub mod $name {}
    };
}

chapter!(introduction, "../../../book/src/introduction.md");
chapter!(tensors_and_convolution, "../../../book/src/tensors-and-convolution.md");
chapter!(gradients, "../../../book/src/gradients.md");
chapter!(meshes_and_voxels, "../../../book/src/meshes-and-voxels.md");
chapter!(corruption, "../../../book/src/corruption.md");
chapter!(network, "../../../book/src/network.md");
chapter!(training, "../../../book/src/training.md");
chapter!(evaluation, "../../../book/src/evaluation.md");
chapter!(cli, "../../../book/src/cli.md");
