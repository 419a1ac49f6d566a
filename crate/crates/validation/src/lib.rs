//! Holds the `acceptance` test target. Run it with
//! `cargo test -p geobayes-validation --test acceptance [-- AC-n ...]`.
