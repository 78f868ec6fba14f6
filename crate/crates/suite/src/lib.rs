//! Home of the `acceptance` test target. It lives in its own package so that
//! its expected failures do not stop the rest of a workspace test run.
