"""Chemical-protein relation extraction with an ensemble of SVM, CNN, and Bi-LSTM models."""

__version__ = "0.1.0"
