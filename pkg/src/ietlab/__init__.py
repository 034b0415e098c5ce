"""Interval exchanges, skew products over them and saddle passage-time asymptotics."""
