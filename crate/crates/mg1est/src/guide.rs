//! The guide's chapters, compiled so every code listing in `book/` runs as
//! a doc-test. `mdbook` cannot execute listings against the crate itself;
//! including each chapter as module documentation makes `cargo test --doc`
//! do it instead, keeping the book and the API in lockstep.

macro_rules! chapter {
    ($name:ident, $path:literal) => {
        #[doc = include_str!($path)]
        pub mod $name {}
    };
}

chapter!(readme, "../../../README.md");
chapter!(overview, "../../../book/src/overview.md");
chapter!(model, "../../../book/src/model.md");
chapter!(policies, "../../../book/src/policies.md");
chapter!(simulation, "../../../book/src/simulation.md");
chapter!(work, "../../../book/src/work.md");
chapter!(analysis, "../../../book/src/analysis.md");
chapter!(bounds, "../../../book/src/bounds.md");
chapter!(experiments, "../../../book/src/experiments.md");
