pub use solsphere;
