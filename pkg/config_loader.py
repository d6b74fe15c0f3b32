"""
Configuration Loader for CoordMech
Reads coordmech_config.txt and makes engine, cap and sweep settings available
"""

import os
import logging
from typing import Dict, List, Any, Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = 'coordmech_config.txt'


class CoordMechConfig:
    """Loads and manages configuration from coordmech_config.txt"""

    DEFAULTS: Dict[str, Dict[str, str]] = {
        'engine': {
            'default_p': 'auto',
            'render_digits': '12',
            'relative_tolerance': '1e-9',
            'argmin_gap_guard': '1e-6',
            'root_precision': '40',
        },
        'limits': {
            'state_cap': '2000000',
            'psi_max_k': '8',
            'psi_max_elements': '8',
        },
        'dynamics': {
            'max_rounds': '100',
            'order': 'round-robin',
        },
        'sweep': {
            'trials': '1000',
            'seed': '1',
            'n_max': '5',
            'm_max': '4',
            'p_values': '1, 2, 3',
            'load_min': '1',
            'load_max': '20',
            'max_denominator': '4',
            'inf_probability': '0.2',
        },
        'workers': {
            'threads': '1',
        },
        'logging': {
            'log_level': 'WARNING',
            'log_file': '',
            'log_to_console': 'true',
        },
    }

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file or os.getenv('COORDMECH_CONFIG', DEFAULT_CONFIG_FILE)
        self.config: Dict[str, Dict[str, str]] = {}
        self.load_config()

    def load_config(self):
        """Parse the config file on top of the built-in defaults"""
        self._load_defaults()

        if not os.path.exists(self.config_file):
            logger.warning(f"⚠️  Config file not found: {self.config_file} - using default values")
            return

        with open(self.config_file, 'r') as f:
            content = f.read()

        current_section = None
        for line in content.split('\n'):
            line = line.strip()

            # Skip comments and empty lines
            if not line or line.startswith('#'):
                continue

            if line.startswith('[') and line.endswith(']'):
                current_section = line[1:-1].strip()
                self.config.setdefault(current_section, {})
                continue

            if '=' in line and current_section:
                key, value = line.split('=', 1)
                self.config[current_section][key.strip()] = value.strip()

        logger.debug(f"✓ Loaded {len(self.config)} configuration sections from {self.config_file}")

    def _load_defaults(self):
        self.config = {section: dict(values) for section, values in self.DEFAULTS.items()}

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Raw string value, or default when absent or empty"""
        value = self.config.get(section, {}).get(key)
        if value is None or value == '':
            return default
        return value

    def get_int(self, section: str, key: str, default: Optional[int] = None) -> Optional[int]:
        value = self.get(section, key)
        return int(value) if value is not None else default

    def get_float(self, section: str, key: str, default: Optional[float] = None) -> Optional[float]:
        value = self.get(section, key)
        return float(value) if value is not None else default

    def get_bool(self, section: str, key: str, default: bool = False) -> bool:
        value = self.get(section, key)
        if value is None:
            return default
        return value.lower() in ('true', 'yes', '1', 'on')

    def get_list(self, section: str, key: str, default: Optional[List[str]] = None) -> List[str]:
        value = self.get(section, key)
        if value is None:
            return list(default or [])
        return [item.strip() for item in value.split(',') if item.strip()]

    def get_int_list(self, section: str, key: str, default: Optional[List[int]] = None) -> List[int]:
        items = self.get_list(section, key)
        return [int(item) for item in items] if items else list(default or [])

    def default_p(self) -> Optional[int]:
        """Configured p, or None for the m-dependent automatic choice"""
        value = self.get('engine', 'default_p', 'auto')
        return None if value.lower() == 'auto' else int(value)

    def get_logging_setting(self, key: str, default: Any = None) -> Any:
        """Get logging setting by key"""
        if isinstance(default, bool):
            return self.get_bool('logging', key, default)
        return self.get('logging', key, default)


# Global config instance
_config = None


def get_config() -> CoordMechConfig:
    """Get or create global config instance"""
    global _config
    if _config is None:
        load_dotenv()
        _config = CoordMechConfig()
    return _config


def reload_config(config_file: Optional[str] = None) -> CoordMechConfig:
    """Reload configuration from file"""
    global _config
    load_dotenv()
    _config = CoordMechConfig(config_file)
    return _config
