"""Runtime self-check suite and the brute-force oracles it shares with the unit tests."""
