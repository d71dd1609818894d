class ConfigError(ValueError):
    """A mission file failed to load or validate; the message names the field."""
