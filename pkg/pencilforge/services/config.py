###############
#  Configuration loader
#
#  Settings live in a YAML file next to this module; any leaf may be
#  overridden by an environment variable named after its key path.
#
##################
import os
import re
from typing import Any, Optional

import yaml


class Config(dict):

    @staticmethod
    def get_resource_path(resource_name: str) -> str:
        """
        Given a string resolve it to a module relative file path
        unless it is already an absolute path.
        """
        resource_path = resource_name
        if not resource_path.startswith(os.sep):
            resource_path = os.path.join(os.path.dirname(__file__), resource_path)
        return resource_path

    def __init__(self, config, prefix: str = ''):
        dict.__init__(self)
        if isinstance(config, str):
            config_path = Config.get_resource_path(config)
            with open(config_path, 'r') as f:
                self.conf = yaml.safe_load(f) or {}
        elif isinstance(config, dict):
            self.conf = config
        else:
            raise ValueError(f"Config() expects a file name or a dictionary, not '{type(config).__name__}'")
        self.prefix = prefix

    def section(self, name: str) -> "Config":
        """
        Nested configuration block, as a prefixed Config, so that
        environment overrides of its leaves keep working.

        :param name: str, top level key of the block
        :return: Config, possibly empty if the block is missing
        """
        value = self.get(name)
        if isinstance(value, Config):
            return value
        return Config({}, prefix=name)

    def __setitem__(self, key, val):
        raise TypeError("Setting configuration is not allowed.")

    def __str__(self):
        return "Config with keys: "+', '.join(list(self.conf.keys()))

    def get(self, key: str, default: Any = None) -> Any:
        try:
            return self.__getitem__(key)
        except KeyError:
            return default

    def get_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        """
        Integer valued setting; environment overrides arrive as strings.
        """
        value = self.get(key, default)
        if value is None:
            return None
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ValueError(f"Configuration value '{key}' = '{value}' is not an integer")

    def __getitem__(self, key: str) -> Any:
        """
        Use this accessor instead of getting conf directly in order to permit overloading with environment variables.
        Imagine you have a config file of the form

          pencilforge:
            truncation: 3

        This will be overridden by an environment variable by the name of PENCILFORGE_TRUNCATION,
        e.g. export PENCILFORGE_TRUNCATION=4
        """
        key_var = re.sub("[\\W]", '', key)

        name = self.prefix+'_'+key_var if self.prefix else key_var
        try:
            env_name = name.upper()
            return os.environ[env_name]
        except KeyError:
            value = self.conf[key]
            if isinstance(value, dict):
                return Config(value, prefix=name)
            else:
                return value


config = Config('pencilforge.conf')
