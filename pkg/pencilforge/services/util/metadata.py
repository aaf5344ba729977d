"""
Shipped metadata of the verification harness: the JSON schema of
reports and the about record printed by the command line.
"""
import os
import json
from typing import Any, Dict

import jsonschema

from pencilforge.services.util import ReportSchemaError


class ReportMetadata:
    """
    Singleton class for retrieving metadata
    """
    class _ReportMetadata:

        def __init__(self):
            self.schema = None
            self.about = None

        def get_schema(self) -> Dict[str, Any]:
            if not self.schema:
                self.retrieve_schema()
            return self.schema

        def retrieve_schema(self):
            with open(os.path.join(os.path.dirname(__file__), '..', '..', 'metadata', 'report_schema.json')) as f:
                self.schema = json.load(f)

        def get_about(self) -> Dict[str, Any]:
            if not self.about:
                with open(os.path.join(os.path.dirname(__file__), '..', '..', 'metadata', 'about.json')) as f:
                    self.about = json.load(f)
            return self.about

        def validate(self, report: Dict[str, Any]):
            """
            :param report: Dict, report content as written to disk
            :raises ReportSchemaError: when the report does not follow the shipped schema
            """
            try:
                jsonschema.validate(instance=report, schema=self.get_schema())
            except jsonschema.ValidationError as error:
                path = "/".join(str(part) for part in error.absolute_path)
                raise ReportSchemaError(f"Report does not match its schema at '{path}': {error.message}")

    instance = None

    def __init__(self):
        # create a new instance if not already created.
        if not ReportMetadata.instance:
            ReportMetadata.instance = ReportMetadata._ReportMetadata()

    def __getattr__(self, item):
        # proxy function calls to the inner object.
        return getattr(self.instance, item)
