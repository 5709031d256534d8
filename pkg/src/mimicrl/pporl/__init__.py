"""PPO training with adversarial and matched state-error rewards."""
