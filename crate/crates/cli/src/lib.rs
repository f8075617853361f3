//! Command line front end: scenario files, reports, property verification.
