"""Hostless meeting engine: live sessions with stand-in agents, tick-exact
recording, first-person playback with comment splicing, and abridged review
timelines."""

__version__ = "0.1.0"
