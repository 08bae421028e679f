//! Holds the `acceptance` test target. Run it with
//! `cargo test -p wtraj-acceptance --test acceptance`; add `-- --ignored`
//! for the slow tier.
