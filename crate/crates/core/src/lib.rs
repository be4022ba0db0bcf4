//! Broker-mediated XML web-services fabric integrating university department
//! services (admissions, library, hostel, campuses, examinations) and the
//! No-Dues verification that gates degree-certificate issuance.

pub mod broker;
pub mod container;
pub mod departments;
pub mod emis;
pub mod envelope;
pub mod node;
pub mod rpc;
pub mod server;
pub mod store;
#[cfg(any(test, feature = "testing"))]
pub mod testing;
pub mod wsdd;
mod xml;
