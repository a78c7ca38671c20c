# Per-host overrides for this machine.
LOG_LEVEL = 'INFO'
