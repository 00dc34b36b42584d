"""Transfer-entropy feature selection for network intrusion detection."""
