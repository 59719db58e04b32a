"""Multi-source cyber-physical data fusion for DNP3/SCADA intrusion detection."""

__version__ = "0.1.0"
