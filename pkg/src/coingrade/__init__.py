"""Feature-based coin grading: Sobel wedge statistics, colour and brightness
features, SMOTE rebalancing, an MLP classifier and an RBF-SVM baseline."""

__version__ = "0.1.0"
