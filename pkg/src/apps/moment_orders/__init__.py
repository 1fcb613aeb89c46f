"""moment-orders command-line application."""
