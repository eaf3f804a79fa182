//! Holds the `acceptance` test target only. Run it with
//! `cargo test -p bdarma-validation --test acceptance`.
