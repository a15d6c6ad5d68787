"""Cache-aware reinforcement learning for recommender systems with a result cache."""
