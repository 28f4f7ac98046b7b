"""Per-frame recurrence wiring the lift, StreamAgg, QueryAgg and decoder stages."""
