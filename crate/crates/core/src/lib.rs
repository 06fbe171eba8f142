//! Core library of the LAGO data-repository node.
//!
//! Each site in the network runs one node that catalogs data locally,
//! disseminates metadata over OAI-PMH, accepts SWORD package deposits,
//! mints and resolves persistent identifiers, and mirrors its peers'
//! catalogs on a schedule. The modules map onto those concerns:
//!
//! - [`metadata`] — record model, LAGO application profile, XML wire forms
//! - [`store`] — local catalog with content-addressed bitstream storage
//! - [`oaipmh`] — OAI-PMH 2.0 data provider and harvester client
//! - [`sword`] — SWORD-style deposit server and client
//! - [`pid`] — handle registry with template part identifiers
//! - [`ingest`] — batch SAF build / deposit / export toolkit
//! - [`federation`] — peer sync engine and scheduler
//! - [`node`] — wires everything behind one HTTP listener

pub mod clock;
mod jsonlog;
pub mod federation;
pub mod ingest;
pub mod metadata;
pub mod node;
pub mod oaipmh;
pub mod pid;
pub mod store;
pub mod sword;
pub mod wire;
