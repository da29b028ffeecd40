pub mod asset;
pub mod blindsig;
pub mod codec;
pub mod institutions;
pub mod instrumentation;
pub mod keys;
pub mod mint;
pub mod relay;
pub mod sim;
pub mod vectors;

#[cfg(test)]
mod testkit;

#[cfg(test)]
mod props;
