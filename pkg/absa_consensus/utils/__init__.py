from absa_consensus.utils.fs import read_file_safely, sanitize_filename, write_file_safely

__all__ = ['read_file_safely', 'sanitize_filename', 'write_file_safely']
