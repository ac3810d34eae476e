"""Figure renderer for the benchmark CSV outputs (standalone; the numerical
package does not depend on it)."""
